import math
from collections import Counter

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from mtlue.baselines import UserEmbeddings
from mtlue.classify import (
    ClassifyError,
    LogRegConfig,
    classification_report,
    fit_tfidf,
    logreg_objective,
    ngrams,
    oversample,
    personalize,
    train_logreg,
)


# -- TF-IDF ----------------------------------------------------------------

def test_ngrams():
    assert ngrams(["a", "b", "c"]) == ["a", "b", "c", "a b", "b c", "a b c"]
    assert ngrams(["a"], (2, 3)) == []


def test_single_doc_symmetry():
    m = fit_tfidf([["good", "food"]])
    assert set(m.features) == {"good", "food", "good food"}
    X = m.transform([["good", "food"]]).toarray()
    assert np.allclose(X, 1 / math.sqrt(3), rtol=1e-15)


def test_idf_values():
    m = fit_tfidf([["a", "b"], ["a"]], n_range=(1, 1))
    idf = dict(zip(m.features, m.idf))
    assert idf["a"] == 1.0
    assert abs(idf["b"] - (math.log(3 / 2) + 1)) < 1e-15
    assert abs(idf["b"] - 1.4054651) < 5e-8


def test_document_frequency_cap_and_ties():
    docs = [["x", "y"], ["x", "z"], ["x", "y"], ["w"]]
    m = fit_tfidf(docs, n_range=(1, 1), max_features=2)
    assert m.features == ["x", "y"]
    m = fit_tfidf(docs, n_range=(1, 1), max_features=3)
    # w and z tie at df 1; w wins lexicographically
    assert m.features == ["w", "x", "y"]
    assert np.all(m.idf > 0)
    with pytest.raises(ClassifyError):
        fit_tfidf([])
    with pytest.raises(ClassifyError):
        fit_tfidf([["a"]], n_range=(2, 3))


def test_transform_matches_manual_formula():
    docs = [["a", "b", "a"], ["b", "c"], ["c", "c", "d"]]
    m = fit_tfidf(docs, n_range=(1, 1))
    X = m.transform([["a", "a", "b", "zzz"]]).toarray()[0]
    idf = {f: math.log(4 / (1 + df)) + 1 for f, df in {"a": 1, "b": 2, "c": 2, "d": 1}.items()}
    raw = {"a": 2 * idf["a"], "b": idf["b"]}
    norm = math.sqrt(sum(v * v for v in raw.values()))
    expected = [raw.get(f, 0.0) / norm for f in m.features]
    assert np.allclose(X, expected, rtol=1e-14)
    assert not m.transform([["unseen"]]).nnz


@settings(max_examples=30)
@given(st.lists(st.sampled_from("abcde"), min_size=1, max_size=12), st.randoms())
def test_unigram_transform_order_invariant(tokens, rnd):
    m = fit_tfidf([list("abcde"), list("abc")], n_range=(1, 1))
    shuffled = tokens[:]
    rnd.shuffle(shuffled)
    assert np.allclose(m.transform([tokens]).toarray(), m.transform([shuffled]).toarray(), rtol=1e-14)


# -- oversampling ----------------------------------------------------------

def labels(counts):
    return np.array([c for c, n in counts.items() for _ in range(n)], dtype=object)


def test_oversample_counts():
    y = labels({"positive": 10, "negative": 10, "neutral": 10})
    X = np.arange(30.0)[:, None]
    Xo, yo = oversample(X, y)
    assert np.array_equal(Xo, X) and list(yo) == list(y)

    _, yo = oversample(np.zeros((15, 1)), labels({"positive": 10, "negative": 5}))
    assert Counter(yo.tolist()) == {"positive": 10, "negative": 10}

    y = labels({"positive": 8, "negative": 3, "neutral": 1})
    X = sp.csr_matrix(np.arange(12.0)[:, None])
    Xo, yo = oversample(X, y, seed=4)
    assert Counter(yo.tolist()) == {"positive": 8, "negative": 8, "neutral": 8}
    assert np.array_equal(Xo[:12].toarray(), X.toarray())
    again, _ = oversample(X, y, seed=4)
    assert np.array_equal(Xo.toarray(), again.toarray())
    dup = Xo[12:].toarray().ravel()
    assert set(dup[:5].tolist()) <= {8.0, 9.0, 10.0} and set(dup[5:].tolist()) == {11.0}

    with pytest.raises(ClassifyError):
        oversample(np.zeros((3, 1)), labels({"positive": 3}))


@settings(max_examples=30)
@given(st.lists(st.sampled_from(["positive", "negative", "neutral"]), min_size=2, max_size=40), st.integers(0, 99))
def test_oversample_keeps_every_row(y, seed):
    if len(set(y)) < 2:
        return
    X = np.arange(len(y), dtype=float)[:, None]
    Xo, yo = oversample(X, np.array(y, dtype=object), seed)
    assert np.array_equal(Xo[: len(y)], X)
    counts = Counter(yo.tolist())
    assert len(set(counts.values())) == 1
    assert all(yo[int(v)] == y[int(v)] for v in Xo.ravel())


# -- logistic regression ---------------------------------------------------

def test_separable_1d():
    model = train_logreg(np.array([[-1.0], [1.0]]), ["negative", "positive"])
    assert list(model.predict(np.array([[-1.0], [1.0]]))) == ["negative", "positive"]


def test_no_signal_gives_uniform():
    X = np.ones((6, 3))
    y = ["positive", "negative", "neutral"] * 2
    P = train_logreg(X, y).predict_proba(X)
    assert np.allclose(P, 1 / 3, atol=1e-3)


def test_objective_gradient_by_finite_differences():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(12, 4))
    Y = np.eye(3)[rng.integers(0, 3, 12)]
    W, b = rng.normal(size=(4, 3)), rng.normal(size=3)
    _, gW, gb = logreg_objective(W, b, X, Y, 0.7)
    h = 1e-6
    for idx in np.ndindex(W.shape):
        E = np.zeros_like(W)
        E[idx] = h
        fd = (logreg_objective(W + E, b, X, Y, 0.7)[0] - logreg_objective(W - E, b, X, Y, 0.7)[0]) / (2 * h)
        assert abs(fd - gW[idx]) < 1e-8
    e = np.array([h, 0, 0])
    fd = (logreg_objective(W, b + e, X, Y, 0.7)[0] - logreg_objective(W, b - e, X, Y, 0.7)[0]) / (2 * h)
    assert abs(fd - gb[0]) < 1e-8


def _reference_loss(theta, X, y, k, C):
    """Independently written objective: per-row loop, summed loss scaled by 1/N."""
    n, d = X.shape
    W = theta[: d * k].reshape(d, k)
    b = theta[d * k:]
    total = 0.0
    for i in range(n):
        z = X[i] @ W + b
        m = z.max()
        total += m + math.log(np.exp(z - m).sum()) - z[y[i]]
    return (total + 0.5 / C * float((W ** 2).sum())) / n


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_matches_reference_optimizer(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(20, 5))
    yi = rng.integers(0, 3, 20)
    classes = ("positive", "negative", "neutral")
    model = train_logreg(X, np.array(classes, dtype=object)[yi])
    assert model.converged
    ref = minimize(_reference_loss, np.zeros(5 * 3 + 3), args=(X, yi, 3, 1.0), method="L-BFGS-B",
                   options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 10_000})
    assert abs(model.final_loss - ref.fun) < 1e-4
    theta = np.concatenate([model.weights.ravel(), model.bias])
    assert abs(_reference_loss(theta, X, yi, 3, 1.0) - model.final_loss) < 1e-12


def test_logreg_flags_and_errors():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 4))
    y = np.array(["positive", "negative", "neutral"], dtype=object)[rng.integers(0, 3, 30)]
    model = train_logreg(X, y, LogRegConfig(max_iter=2))
    assert not model.converged and model.n_iter == 2
    assert np.all(np.isfinite(model.weights))
    with pytest.raises(ClassifyError, match="outside"):
        train_logreg(X, ["happy"] * 30)
    with pytest.raises(ClassifyError):
        train_logreg(np.full((2, 1), np.nan), ["positive", "negative"])
    sparse = train_logreg(sp.csr_matrix(X), y)
    dense = train_logreg(X, y)
    assert np.allclose(sparse.weights, dense.weights, atol=1e-12)


# -- personalization -------------------------------------------------------

def test_personalize_shapes_and_rows():
    emb = UserEmbeddings("mtl", ["u", "v", "z"], np.array([[3.0, 4.0], [1.0, 0.0], [0.0, 0.0]]))
    X = sp.csr_matrix(np.arange(6.0).reshape(3, 2))
    P = personalize(X, ["u", "u", "z"], emb).toarray()
    assert P.shape == (3, 4)
    assert np.allclose(P[0, 2:], [0.6, 0.8]) and np.array_equal(P[0, 2:], P[1, 2:])
    assert np.array_equal(P[2], [4.0, 5.0, 0.0, 0.0])
    assert np.array_equal(P[:, :2], X.toarray())
    wide = personalize(sp.csr_matrix((2, 15000)), ["u", "v"],
                       UserEmbeddings("mtl", ["u", "v"], np.ones((2, 300))))
    assert wide.shape == (2, 15300)
    with pytest.raises(ClassifyError, match="'w'"):
        personalize(X, ["u", "u", "w"], emb)


# -- reports ---------------------------------------------------------------

def test_perfect_predictions():
    y = ["positive", "negative", "neutral", "positive"]
    r = classification_report(y, y)
    assert r.precision == r.recall == r.f1 == 1.0


def test_confusion_matrix_by_hand():
    # rows true, columns predicted (pos, neg, neu)
    confusion = {("positive", "positive"): 3, ("positive", "negative"): 1,
                 ("negative", "negative"): 2, ("negative", "neutral"): 1,
                 ("neutral", "positive"): 1, ("neutral", "neutral"): 2}
    y_true, y_pred = [], []
    for (t, p), n in confusion.items():
        y_true += [t] * n
        y_pred += [p] * n
    r = classification_report(y_true, y_pred)
    # pos: P 3/4 R 3/4; neg: P 2/3 R 2/3; neu: P 2/3 R 2/3; supports 4, 3, 3
    assert r.per_class["positive"]["precision"] == 3 / 4
    assert r.per_class["negative"]["recall"] == 2 / 3
    assert r.precision == pytest.approx((4 * 3 / 4 + 3 * 2 / 3 + 3 * 2 / 3) / 10, abs=1e-15)
    assert r.f1 == pytest.approx(0.7, abs=1e-15)
    m = classification_report(y_true, y_pred, average="macro")
    assert m.recall == pytest.approx((3 / 4 + 2 / 3 + 2 / 3) / 3, abs=1e-15)
    text = r.to_text().splitlines()
    assert text[0] == "method,dataset,class,precision,recall,f1,support"
    assert text[-1].endswith(",0.700000,10")
    with pytest.raises(ClassifyError):
        classification_report(y_true, y_pred, average="micro")


@settings(max_examples=40)
@given(st.lists(st.tuples(st.sampled_from("ABC"), st.sampled_from("ABC")), min_size=1, max_size=30))
def test_metrics_bounded(pairs):
    t, p = zip(*pairs)
    r = classification_report(list(t), list(p), classes=tuple("ABC"))
    assert all(0 <= v <= 1 for v in (r.precision, r.recall, r.f1))
