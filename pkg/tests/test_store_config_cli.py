import json

import numpy as np
import pytest

from mtlue import cli
from mtlue.config import ConfigError, RunConfig, coerce, parse_config_text, resolve
from mtlue.corpus import load_reviews
from mtlue.pipeline import DESK_CONFIG, PERSONALIZE_CONFIG
from mtlue.sgns import TrainConfig, init_model
from mtlue.store import EmbeddingFileError, load_embeddings, save_embeddings
from mtlue.vocab import EntityIndex, Vocabulary


# -- embedding files -------------------------------------------------------

def test_round_trip_small_table(tmp_path):
    X = np.random.default_rng(0).normal(size=(3, 4))
    save_embeddings("item", ["a", "b", "c"], X, tmp_path / "t.vec")
    f = load_embeddings(tmp_path / "t.vec")
    assert (f.kind, f.ids, f.dim, len(f)) == ("item", ["a", "b", "c"], 4, 3)
    assert np.allclose(f.vectors, X, rtol=5e-9, atol=0)
    assert (tmp_path / "t.vec").read_text().splitlines()[0] == "item 3 4 v1"


def write(tmp_path, text):
    p = tmp_path / "e.vec"
    p.write_text(text)
    return p


def test_short_file_fails_at_end(tmp_path):
    rows = "".join(f"u{i} 1 2\n" for i in range(4))
    with pytest.raises(EmbeddingFileError) as err:
        load_embeddings(write(tmp_path, "user 5 2 v1\n" + rows))
    assert err.value.line == 6 and "declares 5" in str(err.value)


def test_short_row_names_line(tmp_path):
    good = " ".join(["0.5"] * 300)
    short = " ".join(["0.5"] * 299)
    with pytest.raises(EmbeddingFileError) as err:
        load_embeddings(write(tmp_path, f"user 2 300 v1\na {good}\nb {short}\n"))
    assert err.value.line == 3 and "line 3" in str(err.value)


@pytest.mark.parametrize("text,line", [
    ("", 1),
    ("user 1 2\n", 1),
    ("movie 1 2 v1\na 1 2\n", 1),
    ("user x 2 v1\na 1 2\n", 1),
    ("user 2 2 v1\na 1 2\na 3 4\n", 3),
    ("user 1 2 v1\na 1 2\nb 3 4\n", 3),
    ("user 1 2 v1\na 1 zz\n", 2),
    ("user 1 2 v1\na 1 nan\n", 2),
])
def test_malformed_files(tmp_path, text, line):
    with pytest.raises(EmbeddingFileError) as err:
        load_embeddings(write(tmp_path, text))
    assert err.value.line == line


def test_save_validation(tmp_path):
    for kind, ids, X in (("user", ["a", "a"], np.zeros((2, 1))), ("user", ["a b"], np.zeros((1, 1))),
                         ("user", ["a"], np.array([[np.inf]])), ("song", ["a"], np.zeros((1, 1))),
                         ("user", ["a"], np.zeros((2, 1)))):
        with pytest.raises(EmbeddingFileError):
            save_embeddings(kind, ids, X, tmp_path / "x.vec")


# -- configuration ---------------------------------------------------------

def test_coerce_types():
    assert coerce("dim", "50") == 50
    assert coerce("learning_rate", "3e-5") == 3e-5
    assert coerce("ks", "4, 8") == (4, 8)
    assert coerce("tasks", ["user_word"]) == ("user_word",)
    assert coerce("lenient", "yes") is True
    assert coerce("reviews", "data/x.jsonl") == "data/x.jsonl"
    for name, bad in (("dim", "many"), ("dim", 2.5), ("lenient", "maybe"), ("nonsense", 1)):
        with pytest.raises(ConfigError):
            coerce(name, bad)


def test_config_text_formats():
    kv = parse_config_text("# comment\ndim = 64\nks = 4,8  # inline\n\nconfig_version = 1\n")
    assert kv == {"dim": 64, "ks": (4, 8), "config_version": 1}
    assert parse_config_text('{"dim": 64, "tasks": ["word_word"]}') == {"dim": 64, "tasks": ("word_word",)}
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("dim 64")
    with pytest.raises(ConfigError, match="unknown"):
        parse_config_text("colour = red")
    with pytest.raises(ConfigError, match="JSON"):
        parse_config_text("{bad json")


def test_precedence_file_env_cli(tmp_path):
    cfg_file = tmp_path / "run.conf"
    cfg_file.write_text("dim = 10\nepochs = 2\nseed = 1\n")
    env = {"MTLUE_EPOCHS": "3", "MTLUE_SEED": "7", "HOME": "/x"}
    cfg = resolve(cfg_file, {"seed": "9"}, env)
    assert (cfg.dim, cfg.epochs, cfg.seed) == (10, 3, 9)
    with pytest.raises(ConfigError):
        resolve(tmp_path / "missing.conf", {}, {})
    with pytest.raises(ConfigError):
        resolve(None, {}, {"MTLUE_BOGUS": "1"})


def test_presets_and_validation():
    assert RunConfig().train_config() == TrainConfig()
    assert RunConfig(preset="desk").train_config() == DESK_CONFIG
    assert RunConfig(preset="personalize", dim=8).train_config().dim == 8
    assert RunConfig(preset="personalize").train_config().learning_rate == PERSONALIZE_CONFIG.learning_rate
    for bad in (dict(preset="fast"), dict(config_version=2), dict(average="micro"), dict(mi_target="x")):
        with pytest.raises(ConfigError):
            RunConfig(**bad)
    with pytest.raises(ConfigError):
        RunConfig(learning_rate=-1.0).train_config()
    with pytest.raises(ConfigError, match="reviews"):
        RunConfig().require("reviews")
    assert RunConfig(dim=5).digest() == RunConfig(dim=5).digest() != RunConfig(dim=6).digest()


# -- command line ----------------------------------------------------------

def run(capsys, *argv):
    status = cli.main(list(argv))
    return status, capsys.readouterr().err


def test_error_lines_and_codes(tmp_path, capsys):
    status, err = run(capsys, "train", "--reviews", str(tmp_path / "none.jsonl"), "--output", str(tmp_path))
    assert status == 2 and err.startswith("mtlue: error[config]:") and err.count("\n") == 1

    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"doc_id": 1}\n')
    status, err = run(capsys, "ingest", "--input", str(bad), "--salt", "s", "--output", str(tmp_path / "o.jsonl"))
    assert status == 3 and "error[input]" in err and "line 1" in err

    vec = tmp_path / "u.vec"
    vec.write_text("user 2 2 v1\na 1 2\n")
    corpus = tmp_path / "c.jsonl"
    assert cli.main(["synth", "--output", str(corpus), "--n-users", "8", "--n-items", "4"]) == 0
    status, err = run(capsys, "eval-cluster", "--reviews", str(corpus), "--embeddings", str(vec),
                      "--output", str(tmp_path / "r.csv"))
    assert status == 4 and "error[format]" in err and "line 3" in err

    status, err = run(capsys, "synth", "--output", str(tmp_path / "s.jsonl"), "--dim", "lots")
    assert status == 2 and "bad value" in err


def test_ingest_anonymizes(tmp_path):
    raw = tmp_path / "raw.jsonl"
    recs = [{"doc_id": f"d{i}", "user_id": "alice", "item_id": f"i{i}", "rating": 5,
             "text": "Great place to eat , would come back again soon", "genres": ["food"]} for i in range(3)]
    raw.write_text("\n".join(json.dumps(r) for r in recs) + "\n")
    out = tmp_path / "clean.jsonl"
    assert cli.main(["ingest", "--input", str(raw), "--dataset-kind", "yelp", "--salt", "k", "--output", str(out)]) == 0
    rs = load_reviews(out, "yelp")
    assert len(rs) == 3 and len({r.user_id for r in rs}) == 1 and rs.reviews[0].user_id != "alice"
    assert rs.reviews[0].tokens[0] == "great" and rs.reviews[0].sentiment == "positive"
    manifest = json.loads((tmp_path / "clean.jsonl.manifest.json").read_text())
    assert manifest["command"] == "ingest" and str(raw) in manifest["inputs"]
    assert set(manifest["versions"]) >= {"mtlue", "numpy", "scipy"}


def test_train_zero_epochs_writes_initialization(tmp_path, capsys):
    corpus = tmp_path / "c.jsonl"
    cli.main(["synth", "--output", str(corpus), "--n-users", "12", "--n-items", "4"])
    out = tmp_path / "m"
    status = cli.main(["train", "--reviews", str(corpus), "--output", str(out), "--epochs", "0",
                       "--dim", "6", "--seed", "3", "--log-level", "info"])
    assert status == 0
    vocab = Vocabulary.load(out / "vocab.txt")
    index = EntityIndex.load(out / "entities.txt")
    init = init_model(len(vocab), index.n_users, index.n_items, TrainConfig(dim=6, seed=3, epochs=0))
    for table, name in zip(init, ("word.vec", "user.vec", "item.vec")):
        f = load_embeddings(out / name)
        assert np.allclose(f.vectors, table.vectors, rtol=5e-9, atol=0)
    assert (out / "progress.jsonl").read_text() == ""
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["epochs"] == 0 and len(manifest["config_sha256"]) == 64


def test_progress_and_json_logs(tmp_path, capsys):
    corpus = tmp_path / "c.jsonl"
    cli.main(["synth", "--output", str(corpus), "--n-users", "12", "--n-items", "4"])
    status = cli.main(["train", "--reviews", str(corpus), "--output", str(tmp_path / "m"), "--epochs", "1",
                       "--dim", "4", "--log-level", "info"])
    assert status == 0
    records = [json.loads(l) for l in (tmp_path / "m" / "progress.jsonl").read_text().splitlines()]
    assert [r["task"] for r in records] == ["word_word", "user_word", "item_word", "user_item"]
    logs = [json.loads(l) for l in capsys.readouterr().err.splitlines()]
    assert logs and all(entry["level"] == "info" for entry in logs)
    assert {entry["task"] for entry in logs} == {r["task"] for r in records}


def test_baselines_and_export(tmp_path, capsys):
    corpus = tmp_path / "c.jsonl"
    cli.main(["synth", "--output", str(corpus), "--n-users", "16", "--n-items", "8"])
    out = tmp_path / "b"
    for method in ("word2user", "user2vec", "random"):
        status = cli.main(["train-baseline", method, "--reviews", str(corpus), "--output", str(out / method),
                           "--epochs", "1", "--dim", "5"])
        assert status == 0
        assert load_embeddings(out / method / "user.vec").dim == 5
    csv = tmp_path / "xy.csv"
    assert cli.main(["export-2d", "--reviews", str(corpus), "--embeddings", str(out / "user2vec" / "user.vec"),
                     "--output", str(csv)]) == 0
    lines = csv.read_text().splitlines()
    assert lines[0] == "user_id,pc1,pc2,genres" and len(lines) == 17
    with pytest.raises(SystemExit):
        cli.main(["export-2d", "--help"])
    assert "not t-SNE" in " ".join(capsys.readouterr().out.split())


def test_project_2d_matches_svd_components():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 6)) * np.array([5, 3, 1, 1, 1, 1])
    P = cli.project_2d(X)
    C = X - X.mean(axis=0)
    eigval, eigvec = np.linalg.eigh(C.T @ C)
    ref = C @ eigvec[:, ::-1][:, :2]
    assert np.allclose(np.abs(P), np.abs(ref), atol=1e-10)
    assert np.allclose(P.mean(axis=0), 0, atol=1e-12)
    assert np.array_equal(cli.project_2d(X), P)


def test_analyses_from_cli(tmp_path):
    corpus = tmp_path / "c.jsonl"
    cli.main(["synth", "--output", str(corpus), "--n-users", "80", "--seed", "3"])
    overlap = tmp_path / "overlap.csv"
    assert cli.main(["analyze-overlap", "--reviews", str(corpus), "--top-k", "30", "--output", str(overlap)]) == 0
    rows = overlap.read_text().splitlines()
    header = rows[0].split(",")
    assert header[0] == "overlap" and sorted(header[1:]) == ["genre0", "genre1", "genre2", "genre3"]
    assert all(row.split(",")[i] == "1.000000" for i, row in enumerate(rows[1:], start=1))
    grid = tmp_path / "grid.csv"
    assert cli.main(["analyze-crossgroup", "--reviews", str(corpus), "--output", str(grid)]) == 0
    assert grid.read_text().startswith("crossgroup_f1,genre")


@pytest.mark.slow
def test_personalized_beats_plain_from_cli(tmp_path):
    corpus = tmp_path / "p.jsonl"
    assert cli.main(["synth", "--fixture", "personalize", "--output", str(corpus), "--seed", "0"]) == 0
    scores = {}
    for mode in ("plain", "personalized"):
        out = tmp_path / f"{mode}.csv"
        assert cli.main(["eval-classify", mode, "--reviews", str(corpus), "--preset", "personalize",
                         "--output", str(out)]) == 0
        last = out.read_text().splitlines()[-1].split(",")
        assert last[2] == "weighted avg"
        scores[mode] = float(last[5])
    assert scores["personalized"] > scores["plain"]
