"""
Feature selection, task pairing and global-component modelling.

The l1-penalised logistic regression minimises::

    ||w||_1 + C * sum_i cw(y_i) * log(1 + exp(-ytilde_i (z_i . w + b)))

with an unpenalised intercept and balanced class weights ``cw(k) = n / (2 n_k)``.
It is solved by accelerated proximal gradient (FISTA) run simultaneously for
every value of a regularisation grid.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import stats

log = logging.getLogger(__name__)

GRID_SIZE = 250
GRID_EXPONENTS = (-2.0, 0.25)
SEED = 42
LOADING_THRESHOLD = 0.4
PERMUTATIONS = 100
PROMAX_POWER = 4


@dataclass(frozen=True)
class SelectionConfig:
    grid: tuple = tuple(np.logspace(*GRID_EXPONENTS, GRID_SIZE))
    seed: int = SEED
    tol: float = 1e-6
    max_iter: int = 5000

    def __post_init__(self):
        g = np.asarray(self.grid)
        if g.size == 0 or np.any(np.diff(g) <= 0) or g[0] <= 0:
            raise ValueError("grid must be positive and strictly ascending")


# --------------------------------------------------------------------------
# standardisation


@dataclass(frozen=True, eq=False)
class Standardizer:
    means: np.ndarray
    sds: np.ndarray
    kept: np.ndarray  # column indices retained

    def transform(self, X):
        X = np.asarray(X, dtype=float)[:, self.kept]
        return (X - self.means) / self.sds


def standardize(X):
    """Column z-scores with the sample (n-1) standard deviation.

    Constant columns are dropped with a warning.

    Returns
    -------
    Z, means, sds, kept
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need a 2-D matrix with at least 2 rows")
    sds = X.std(axis=0, ddof=1)
    kept = np.flatnonzero(sds > 0)
    if kept.size < X.shape[1]:
        log.warning("dropping constant columns %s", np.flatnonzero(sds == 0).tolist())
    means = X[:, kept].mean(axis=0)
    Z = (X[:, kept] - means) / sds[kept]
    return Z, means, sds[kept], kept


def fit_standardizer(X):
    _, means, sds, kept = standardize(X)
    return Standardizer(means, sds, kept)


# --------------------------------------------------------------------------
# l1 logistic regression


@dataclass(frozen=True, eq=False)
class LassoModel:
    weights: np.ndarray
    intercept: float
    C: float
    bacc: float | None = None
    features: tuple = ()

    def decision(self, Z):
        return np.asarray(Z, float) @ self.weights + self.intercept

    def predict(self, Z):
        return (self.decision(Z) > 0).astype(int)


def _class_weights(y):
    y = np.asarray(y)
    n = y.size
    n1 = int(np.count_nonzero(y == 1))
    n0 = n - n1
    if n0 == 0 or n1 == 0:
        raise ValueError("logistic regression needs both classes in y")
    return np.where(y == 1, n / (2.0 * n1), n / (2.0 * n0))


def _soft(x, thr):
    return np.sign(x) * np.maximum(np.abs(x) - thr, 0.0)


def _objective(Z, ys, cw, W, b, Cs):
    m = ys[:, None] * (Z @ W + b[None, :])
    loss = cw @ np.logaddexp(0.0, -m)
    return np.abs(W).sum(axis=0) + Cs * loss


def lasso_path(Z, y, Cs, class_weights="balanced", tol=1e-6, max_iter=5000):
    """Solve the penalised problem for every ``C`` at once.

    Returns
    -------
    W : (p, len(Cs)) weights
    b : (len(Cs),) intercepts
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y).astype(int)
    Cs = np.asarray(Cs, dtype=float)
    if class_weights == "balanced":
        cw = _class_weights(y)
    elif class_weights is None:
        _class_weights(y)
        cw = np.ones(y.size)
    else:
        cw = np.asarray(class_weights, dtype=float)
    ys = np.where(y == 1, 1.0, -1.0)
    n, p = Z.shape
    A = np.hstack([Z, np.ones((n, 1))]) * np.sqrt(cw)[:, None]
    lip = 0.25 * float(np.linalg.eigvalsh(A.T @ A)[-1])
    step = 1.0 / (Cs * lip)  # per-C step
    W = np.zeros((p, Cs.size))
    b = np.zeros(Cs.size)
    Wy, by = W.copy(), b.copy()
    tk = np.ones(Cs.size)
    quiet = np.zeros(Cs.size, dtype=int)  # consecutive iterations below tol
    f_old = _objective(Z, ys, cw, W, b, Cs)
    act = np.arange(Cs.size)  # columns still iterating
    for it in range(max_iter):
        C, st = Cs[act], step[act]
        Wa, ba, Wya, bya = W[:, act], b[act], Wy[:, act], by[act]
        m = ys[:, None] * (Z @ Wya + bya[None, :])
        g = -(cw * ys)[:, None] * expit(-m)
        W_new = _soft(Wya - st * C * (Z.T @ g), st)
        b_new = bya - st * C * g.sum(axis=0)
        f_new = _objective(Z, ys, cw, W_new, b_new, C)
        fo = f_old[act]
        # adaptive restart: reject a step that increases the objective
        worse = f_new > fo
        W_new[:, worse] = Wa[:, worse]
        b_new[worse] = ba[worse]
        f_new = np.where(worse, fo, f_new)
        tka = tk[act]
        t_next = np.where(worse, 1.0, 0.5 * (1 + np.sqrt(1 + 4 * tka * tka)))
        mom = np.where(worse, 0.0, (tka - 1) / t_next)
        Wy[:, act] = W_new + mom * (W_new - Wa)
        by[act] = b_new + mom * (b_new - ba)
        # a rejected plain proximal step (no momentum) means no further progress
        stalled = worse & (tka == 1.0)
        rel = np.abs(fo - f_new) / np.maximum(1.0, np.abs(f_new))
        change = np.where(stalled, 0.0, np.where(worse, np.inf, rel))
        W[:, act], b[act], f_old[act], tk[act] = W_new, b_new, f_new, t_next
        quiet[act] = np.where(change <= tol, quiet[act] + 1, 0)
        act = act[quiet[act] < 20]
        if act.size == 0:
            break
    return W, b


def fit_lasso_logistic(Z, y, C, class_weights="balanced", seed=SEED, tol=1e-6, max_iter=5000):
    """Single-``C`` fit; deterministic (``seed`` is accepted for interface stability)."""
    del seed  # the solver has no random component
    W, b = lasso_path(Z, y, [C], class_weights, tol, max_iter)
    return LassoModel(W[:, 0], float(b[0]), float(C))


def bacc(y_true, y_pred):
    """Balanced accuracy: mean of sensitivity and specificity."""
    y_true = np.asarray(y_true).astype(int)
    y_pred = np.asarray(y_pred).astype(int)
    pos = y_true == 1
    if pos.all() or not pos.any():
        raise ValueError("balanced accuracy needs both classes in y_true")
    sens = float(np.mean(y_pred[pos] == 1))
    spec = float(np.mean(y_pred[~pos] == 0))
    return (sens + spec) / 2


@dataclass(frozen=True, eq=False)
class GridResult:
    best_C: float
    best_index: int
    mean_bacc: np.ndarray
    grid: np.ndarray
    model: LassoModel | None = None


def grid_search_logo(X, y, groups, config=None, features=()):
    """Leave-one-group-out search of the regularisation grid.

    Each fold standardises with its training statistics.  The best ``C`` maximises
    mean BACC over folds (ties: the smallest, i.e. sparsest, ``C``); the returned
    model is refitted on all data at that ``C``.
    """
    cfg = config or SelectionConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    groups = np.asarray(groups)
    Cs = np.asarray(cfg.grid, dtype=float)
    levels = sorted(set(groups.tolist()))
    if len(levels) < 2:
        raise ValueError("leave-one-group-out needs at least 2 groups")
    scores = []
    for g in levels:
        test = groups == g
        train = ~test
        yt = y[test]
        if yt.min() == yt.max():
            log.warning("fold %r has a single-class test set; skipped", g)
            continue
        if y[train].min() == y[train].max():
            log.warning("fold %r has a single-class training set; skipped", g)
            continue
        st = fit_standardizer(X[train])
        Ztr, Zte = st.transform(X[train]), st.transform(X[test])
        W, b = lasso_path(Ztr, y[train], Cs, tol=cfg.tol, max_iter=cfg.max_iter)
        pred = (Zte @ W + b[None, :] > 0).astype(int)
        scores.append([bacc(yt, pred[:, j]) for j in range(Cs.size)])
    if not scores:
        raise ValueError("no usable cross-validation fold")
    mean = np.mean(scores, axis=0)
    best = int(np.flatnonzero(mean == mean.max())[0])
    st = fit_standardizer(X)
    Z = st.transform(X)
    W, b = lasso_path(Z, y, Cs[best:best + 1], tol=cfg.tol, max_iter=cfg.max_iter)
    weights = np.zeros(X.shape[1])
    weights[st.kept] = W[:, 0]
    names = tuple(features) if features else ()
    model = LassoModel(weights, float(b[0]), float(Cs[best]), float(mean[best]), names)
    return GridResult(float(Cs[best]), best, mean, Cs, model)


# --------------------------------------------------------------------------
# selection and task pairing


@dataclass(frozen=True, eq=False)
class SelectionResult:
    winner: object
    sign: int
    table: list  # rows: feature, mean rank, mean |w|, per-task ranks and weights


def select_feature(models):
    """Pick the feature ranked highest on average across per-task LASSO models.

    Parameters
    ----------
    models : mapping task -> LassoModel
        Each model carries its candidate feature names in ``features``.

    Returns
    -------
    SelectionResult
        ``sign`` is the sign of the winner's mean weight (+1 if higher values
        indicate the manifestation).
    """
    from scipy.stats import rankdata

    ranks, mags, signed = {}, {}, {}
    order = []
    any_nonzero = False
    for task, m in models.items():
        w = np.asarray(m.weights, dtype=float)
        if np.any(w != 0):
            any_nonzero = True
        r = rankdata(-np.abs(w), method="average")
        for f, rk, wi in zip(m.features, r, w):
            if f not in ranks:
                ranks[f], mags[f], signed[f] = {}, {}, {}
                order.append(f)
            ranks[f][task] = float(rk)
            mags[f][task] = abs(float(wi))
            signed[f][task] = float(wi)
    if not any_nonzero:
        raise ValueError("every task model has all-zero weights")
    table = []
    for f in order:
        table.append({
            "feature": f,
            "mean_rank": float(np.mean(list(ranks[f].values()))),
            "mean_abs_weight": float(np.mean(list(mags[f].values()))),
            "ranks": dict(ranks[f]),
            "weights": dict(signed[f]),
        })
    table.sort(key=lambda r: (r["mean_rank"], -r["mean_abs_weight"]))
    win = table[0]
    total = sum(win["weights"].values())
    return SelectionResult(win["feature"], 1 if total >= 0 else -1, table)


@dataclass(frozen=True)
class PairingResult:
    task: object
    rho: dict
    monotone: dict
    fallback: bool = False


def _decreasing(medians):
    d = np.diff(medians)
    return bool(np.all(d <= 0) and np.any(d < 0))


def pair_task(data):
    """Choose the task whose feature decreases most consistently with grade.

    Parameters
    ----------
    data : mapping task -> (values, grades)
        Weight-adjusted feature values (higher = worse) of intact subjects.
        Keys are tried in the mapping's order for tie-breaking, so pass them
        sorted by task index.

    Returns
    -------
    PairingResult
        Task with monotone non-increasing per-grade medians and the most
        negative Spearman correlation; without a monotone task the most
        negative correlation wins and ``fallback`` is set.
    """
    rho, mono = {}, {}
    for task, (values, grades) in data.items():
        v = np.asarray(values, dtype=float)
        g = np.asarray(grades)
        levels = np.unique(g)
        if levels.size < 3:
            raise ValueError(f"{task}: intact subjects must span at least 3 grades")
        rho[task] = stats.spearman_rho(g, v)
        mono[task] = _decreasing([stats.median(v[g == lv]) for lv in levels])
    pool = [t for t in data if mono[t]]
    fallback = not pool
    if fallback:
        log.warning("no task shows a monotone decreasing trend; using the most negative rho")
        pool = list(data)
    best = pool[0]
    for t in pool[1:]:
        if rho[t] < rho[best]:
            best = t
    return PairingResult(best, rho, mono, fallback)


# --------------------------------------------------------------------------
# components


@dataclass(frozen=True, eq=False)
class ComponentFit:
    eigenvalues: np.ndarray
    thresholds: np.ndarray  # permutation 95th percentiles per rank
    n_components: int
    loadings: np.ndarray  # unrotated, retained columns
    rotated: np.ndarray  # promax pattern
    full_loadings: np.ndarray  # all components, unrotated
    weights: list = field(default_factory=list)  # per component: (indices, weights, signs)


def _corr(F):
    Z, _, _, kept = standardize(F)
    if kept.size < F.shape[1]:
        raise ValueError(f"constant columns {sorted(set(range(F.shape[1])) - set(kept.tolist()))}")
    return (Z.T @ Z) / (Z.shape[0] - 1)


def _collinear_columns(F, tol=1e-10):
    Z = (F - F.mean(axis=0)) / F.std(axis=0)
    bad = []
    basis = []
    for j in range(Z.shape[1]):
        if basis:
            B = np.column_stack(basis)
            coef, *_ = np.linalg.lstsq(B, Z[:, j], rcond=None)
            resid = Z[:, j] - B @ coef
            if np.linalg.norm(resid) <= 1e-8 * math.sqrt(Z.shape[0]):
                bad.append(j)
                continue
        basis.append(Z[:, j])
    return bad


def varimax(L, max_iter=500, tol=1e-10):
    """Varimax rotation with Kaiser normalisation; returns (rotated, rotation)."""
    L = np.asarray(L, dtype=float)
    p, k = L.shape
    if k < 2:
        return L.copy(), np.eye(k)
    h = np.sqrt((L * L).sum(axis=1))
    h[h == 0] = 1.0
    A = L / h[:, None]
    R = np.eye(k)
    d = 0.0
    for _ in range(max_iter):
        B = A @ R
        u, s, vt = np.linalg.svd(A.T @ (B ** 3 - B @ np.diag((B * B).sum(axis=0)) / p))
        R = u @ vt
        d_new = s.sum()
        if d_new < d * (1 + tol):
            break
        d = d_new
    return (A @ R) * h[:, None], R


def promax(L, power=PROMAX_POWER):
    """Promax (oblique) pattern loadings from varimax-rotated loadings."""
    L = np.asarray(L, dtype=float)
    if L.shape[1] < 2:
        return L.copy()
    V, _ = varimax(L)
    h = np.sqrt((V * V).sum(axis=1))
    h[h == 0] = 1.0
    Vn = V / h[:, None]
    P = np.abs(Vn) ** power * np.sign(Vn)
    U = np.linalg.lstsq(Vn, P, rcond=None)[0]
    d = np.sqrt(np.diag(np.linalg.inv(U.T @ U)))
    U = U * d[None, :]
    return (Vn @ U) * h[:, None]


def parallel_analysis(F, n_perm=PERMUTATIONS, quantile=0.95, seed=SEED):
    """Observed eigenvalues, permutation thresholds and retained count (Horn)."""
    F = np.asarray(F, dtype=float)
    obs = np.linalg.eigvalsh(_corr(F))[::-1]
    rng = np.random.default_rng(seed)
    perm = np.empty((n_perm, F.shape[1]))
    for r in range(n_perm):
        P = np.column_stack([rng.permutation(F[:, j]) for j in range(F.shape[1])])
        perm[r] = np.linalg.eigvalsh(_corr(P))[::-1]
    thr = np.quantile(perm, quantile, axis=0)
    k = 0
    while k < obs.size and obs[k] > thr[k]:
        k += 1
    return obs, thr, k


def pca_promax(F, n_perm=PERMUTATIONS, seed=SEED, power=PROMAX_POWER, max_components=None,
               threshold=LOADING_THRESHOLD):
    """Correlation PCA, parallel-analysis retention, varimax then promax rotation."""
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[1] < 3:
        raise ValueError("need at least 3 feature columns")
    bad = _collinear_columns(F)
    if bad:
        raise ValueError(f"rank-deficient input; collinear columns {bad}")
    R = _corr(F)
    vals, vecs = np.linalg.eigh(R)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    # deterministic sign: largest-magnitude entry of each eigenvector positive
    signs = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])])
    vecs = vecs * signs
    full = vecs * np.sqrt(np.clip(vals, 0, None))
    _, thr, k = parallel_analysis(F, n_perm, seed=seed)
    if max_components is not None:
        k = min(k, max_components)
    L = full[:, :k]
    rot = promax(L, power) if k else L
    # orient rotated columns so that their dominant loading is positive
    if k:
        s = np.sign(rot[np.argmax(np.abs(rot), axis=0), np.arange(k)])
        rot = rot * s
    weights = []
    for j in range(k):
        try:
            weights.append(derive_weights(rot[:, j], threshold))
        except ValueError:
            log.warning("component %d has no loading >= %.2f; dropped", j + 1, threshold)
            weights.append(None)
    return ComponentFit(vals, thr, k, L, rot, full, weights)


def derive_weights(loadings, threshold=LOADING_THRESHOLD):
    """Members with ``|loading| >= threshold``; weights are normalised magnitudes.

    Returns
    -------
    (indices, weights, signs)
    """
    a = np.asarray(loadings, dtype=float)
    idx = np.flatnonzero(np.abs(a) >= threshold)
    if idx.size == 0:
        raise ValueError(f"no loading reaches {threshold}")
    mag = np.abs(a[idx])
    w = mag / mag.sum()
    return idx, w, np.where(a[idx] >= 0, 1, -1)
