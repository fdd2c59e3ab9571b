"""Disseminator and audience statistics: densities, exposure, quantile regression,
quantile grouping, overlap, and contingency tests.

Incivility density is an influencer's ratio of uncivil posts to total posts;
exposure sums survey-follower receptions over direct follows and retweet
relays. Exposure-vs-density relations are summarized with quantile regression
(pinball loss, solved by iteratively reweighted least squares on a smoothed
check loss with a vertex polish step); group comparisons use the G-test,
Pearson chi-square, and Mann-Whitney U with mid-rank tie handling.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import gammaincc

from civiscope.model import Dataset, Dimension, ValidationError


# ---------------------------------------------------------------------------
# densities and exposure

@dataclass(frozen=True)
class DensityRecord:
    influencer_id: str
    dimension: Dimension
    uncivil_count: int
    total_count: int

    @property
    def density(self) -> float:
        return self.uncivil_count / self.total_count


def incivility_density(dataset: Dataset, influencer_id: str, dimension: Dimension,
                       use_human: bool = False) -> DensityRecord:
    """Ratio of uncivil posts to total posts for one influencer; errors on zero posts."""
    total = 0
    uncivil = 0
    for post in dataset.posts:
        if post.author_id != influencer_id:
            continue
        total += 1
        if post.is_uncivil(dimension, use_human=use_human):
            uncivil += 1
    if total == 0:
        raise ValidationError(f"incivility_density: {influencer_id} has no posts in window")
    return DensityRecord(influencer_id=influencer_id, dimension=dimension,
                         uncivil_count=uncivil, total_count=total)


def density_table(dataset: Dataset, dimension: Dimension, use_human: bool = False):
    """DensityRecords for every influencer with posts; zero-post influencers reported separately."""
    totals: dict = {}
    uncivil: dict = {}
    influencers = dataset.influencer_ids
    for post in dataset.posts:
        if post.author_id not in influencers:
            continue
        totals[post.author_id] = totals.get(post.author_id, 0) + 1
        if post.is_uncivil(dimension, use_human=use_human):
            uncivil[post.author_id] = uncivil.get(post.author_id, 0) + 1
    records = [DensityRecord(aid, dimension, uncivil.get(aid, 0), totals[aid])
               for aid in sorted(totals)]
    excluded = tuple(sorted(influencers - set(totals)))
    return records, excluded


def survey_follower_map(dataset: Dataset) -> dict:
    """followee id -> frozenset of survey users following it."""
    survey = dataset.survey_ids
    out: dict = {}
    for edge in dataset.follows:
        if edge.follower_id in survey:
            out.setdefault(edge.followee_id, set()).add(edge.follower_id)
    return {k: frozenset(v) for k, v in out.items()}


def retweet_index(dataset: Dataset) -> dict:
    """original post id -> list of retweet posts referencing it."""
    out: dict = {}
    for post in dataset.posts:
        if post.retweet_of is not None:
            out.setdefault(post.retweet_of.post_id, []).append(post)
    return out


@dataclass(frozen=True)
class ExposureRecord:
    influencer_id: str
    dimension: Dimension
    exposure: int


def exposure_count(dataset: Dataset, survey_followers: dict, influencer_id: str,
                   dimension: Dimension, retweets: Optional[dict] = None,
                   distinct_users: bool = False, use_human: bool = False) -> ExposureRecord:
    """Survey receptions of the influencer's uncivil posts.

    Per uncivil post: the influencer's survey followers, plus the survey
    followers of every other account that retweeted the post. Default counts
    sum per post (the same user exposed twice counts twice);
    distinct_users=True switches to the union of exposed users.
    """
    if retweets is None:
        retweets = retweet_index(dataset)
    own = survey_followers.get(influencer_id, frozenset())
    total = 0
    union: set = set()
    for post in dataset.posts:
        if post.author_id != influencer_id or not post.is_uncivil(dimension, use_human=use_human):
            continue
        total += len(own)
        union |= own
        for rt in retweets.get(post.id, ()):
            if rt.author_id == influencer_id:
                continue
            relayed = survey_followers.get(rt.author_id, frozenset())
            total += len(relayed)
            union |= relayed
    exposure = len(union) if distinct_users else total
    return ExposureRecord(influencer_id=influencer_id, dimension=dimension, exposure=exposure)


def exposure_table(dataset: Dataset, dimension: Dimension, distinct_users: bool = False,
                   use_human: bool = False):
    followers = survey_follower_map(dataset)
    retweets = retweet_index(dataset)
    return [exposure_count(dataset, followers, aid, dimension, retweets=retweets,
                           distinct_users=distinct_users, use_human=use_human)
            for aid in sorted(dataset.influencer_ids)]


# ---------------------------------------------------------------------------
# quantile regression

def pinball_loss(residuals: np.ndarray, tau: float) -> float:
    r = np.asarray(residuals, dtype=float)
    return float(np.sum(r * (tau - (r < 0))))


def _wls_line(x, y, w):
    """Weighted least squares for y ~ b0 + b1 x (closed form)."""
    sw = np.sum(w)
    swx = np.sum(w * x)
    swy = np.sum(w * y)
    swxx = np.sum(w * x * x)
    swxy = np.sum(w * x * y)
    det = sw * swxx - swx * swx
    if det == 0:
        raise ValidationError("quantile_regression: degenerate design")
    b1 = (sw * swxy - swx * swy) / det
    b0 = (swy - b1 * swx) / sw
    return b0, b1


def _irls_quantile(x, y, tau, eps0=1e-6, max_iter=200):
    """IRLS on the smoothed check loss, epsilon shrinking across iterations."""
    b0, b1 = _wls_line(x, y, np.ones_like(x))
    eps = eps0
    for _ in range(max_iter):
        r = y - (b0 + b1 * x)
        asym = np.where(r >= 0, tau, 1.0 - tau)
        w = asym / np.maximum(np.abs(r), eps)
        nb0, nb1 = _wls_line(x, y, w)
        if abs(nb0 - b0) < 1e-13 and abs(nb1 - b1) < 1e-13 and eps <= 1e-12:
            b0, b1 = nb0, nb1
            break
        b0, b1 = nb0, nb1
        eps = max(eps * 0.7, 1e-13)
    return b0, b1


def _polish_vertex(x, y, tau, b0, b1, n_anchor=8):
    """Snap to the best check-loss vertex (line through two data points) near the IRLS fit.

    The pinball objective is piecewise linear, so its minimum interpolates two
    observations; testing lines through the lowest-residual points recovers it
    exactly once IRLS has found the right neighborhood.
    """
    best = (pinball_loss(y - (b0 + b1 * x), tau), b0, b1)
    idx = np.argsort(np.abs(y - (b0 + b1 * x)))[:n_anchor]
    for a in range(len(idx)):
        for b in range(a + 1, len(idx)):
            i, j = idx[a], idx[b]
            if x[i] == x[j]:
                continue
            s1 = (y[j] - y[i]) / (x[j] - x[i])
            s0 = y[i] - s1 * x[i]
            obj = pinball_loss(y - (s0 + s1 * x), tau)
            if obj < best[0] - 1e-15:
                best = (obj, s0, s1)
    return best[1], best[2], best[0]


def _irls_quantile_batch(xb, yb, tau, eps0=1e-6, iters=60):
    """Vectorized IRLS across bootstrap replicates (rows of xb/yb)."""
    w = np.ones_like(xb)
    eps = eps0
    b0 = np.zeros(xb.shape[0])
    b1 = np.zeros(xb.shape[0])
    for _ in range(iters):
        sw = w.sum(axis=1)
        swx = (w * xb).sum(axis=1)
        swy = (w * yb).sum(axis=1)
        swxx = (w * xb * xb).sum(axis=1)
        swxy = (w * xb * yb).sum(axis=1)
        det = sw * swxx - swx * swx
        det = np.where(det == 0, np.nan, det)
        b1 = (sw * swxy - swx * swy) / det
        b0 = (swy - b1 * swx) / sw
        r = yb - (b0[:, None] + b1[:, None] * xb)
        asym = np.where(r >= 0, tau, 1.0 - tau)
        w = asym / np.maximum(np.abs(r), eps)
        eps = max(eps * 0.7, 1e-13)
    return b0, b1


@dataclass(frozen=True)
class QuantileFit:
    tau: float
    beta0: float
    beta1: float
    objective: float
    beta0_ci: tuple
    beta1_ci: tuple
    p_value: float

    def as_dict(self) -> dict:
        return {"tau": self.tau, "beta0": self.beta0, "beta1": self.beta1,
                "objective": self.objective, "beta0_ci": list(self.beta0_ci),
                "beta1_ci": list(self.beta1_ci), "p_value": self.p_value}


DEFAULT_TAUS = (0.1, 0.25, 0.5, 0.75, 0.9)


def quantile_regression(x, y, taus: Sequence[float] = DEFAULT_TAUS, bootstrap_B: int = 1000,
                        seed: int = 0, alpha: float = 0.05) -> dict:
    """Linear conditional-quantile fits with bootstrap percentile CIs and p-values.

    The slope p-value is the two-sided bootstrap sign probability
    2 * min(P(b1* <= 0), P(b1* >= 0)) with the (count+1)/(B+1) correction.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] != y.shape[0] or x.shape[0] < 10:
        raise ValidationError("quantile_regression: need matched x, y with n >= 10")
    if np.all(x == x[0]):
        raise ValidationError("quantile_regression: x is constant")
    for tau in taus:
        if not 0.0 < tau < 1.0:
            raise ValidationError(f"quantile_regression: tau {tau} outside (0,1)")

    n = x.shape[0]
    rng = np.random.default_rng(seed)
    boot_idx = rng.integers(0, n, size=(bootstrap_B, n)) if bootstrap_B > 0 else None

    fits = {}
    for tau in taus:
        b0, b1 = _irls_quantile(x, y, tau)
        b0, b1, obj = _polish_vertex(x, y, tau, b0, b1)
        if bootstrap_B > 0:
            xb = x[boot_idx]
            yb = y[boot_idx]
            bb0, bb1 = _irls_quantile_batch(xb, yb, tau)
            ok = np.isfinite(bb0) & np.isfinite(bb1)
            bb0, bb1 = bb0[ok], bb1[ok]
            lo, hi = 100 * alpha / 2, 100 * (1 - alpha / 2)
            ci0 = (float(np.percentile(bb0, lo)), float(np.percentile(bb0, hi)))
            ci1 = (float(np.percentile(bb1, lo)), float(np.percentile(bb1, hi)))
            m = bb1.shape[0]
            p = 2.0 * min((1 + int(np.sum(bb1 <= 0))) / (m + 1),
                          (1 + int(np.sum(bb1 >= 0))) / (m + 1))
            p = min(1.0, p)
        else:
            ci0 = ci1 = (float("nan"), float("nan"))
            p = float("nan")
        fits[tau] = QuantileFit(tau=tau, beta0=float(b0), beta1=float(b1), objective=float(obj),
                                beta0_ci=ci0, beta1_ci=ci1, p_value=float(p))
    return fits


# ---------------------------------------------------------------------------
# quantile grouping and overlap

def quantile_groups(records: Sequence[DensityRecord], k: int = 4) -> dict:
    """Rank-based split into k near-equal groups, ascending density, ties by id.

    Returns influencer id -> group index in 1..k (1 = lowest density). Group
    sizes differ by at most one; the earliest groups take the extras.
    """
    if k < 2:
        raise ValidationError("quantile_groups: k must be >= 2")
    if len(records) < k:
        raise ValidationError(f"quantile_groups: {len(records)} records < k={k}")
    ordered = sorted(records, key=lambda r: (r.density, r.influencer_id))
    assignment = {}
    for g, chunk in enumerate(np.array_split(np.arange(len(ordered)), k), start=1):
        for i in chunk:
            assignment[ordered[i].influencer_id] = g
    return assignment


def jaccard(a: Iterable, b: Iterable) -> float:
    """|a & b| / |a | b|; the overlap of two empty sets is defined as 1.0."""
    a, b = set(a), set(b)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


# ---------------------------------------------------------------------------
# contingency tables and tests

@dataclass(frozen=True)
class ContingencyTable:
    row_labels: tuple
    col_labels: tuple
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=float)
        if cells.shape != (len(self.row_labels), len(self.col_labels)):
            raise ValidationError("ContingencyTable: cells shape must match labels")
        if np.any(cells < 0) or not np.all(np.isfinite(cells)):
            raise ValidationError("ContingencyTable: cells must be finite and non-negative")
        object.__setattr__(self, "cells", cells)


def crosstab(entities: Iterable, row_key: Callable, col_key: Callable) -> ContingencyTable:
    """Count entities per (row_key(e), col_key(e)); missing keys map to 'unlabeled'."""
    counts: dict = {}
    rows: set = set()
    cols: set = set()
    for e in entities:
        r = row_key(e)
        c = col_key(e)
        r = "unlabeled" if r is None else str(r)
        c = "unlabeled" if c is None else str(c)
        rows.add(r)
        cols.add(c)
        counts[(r, c)] = counts.get((r, c), 0) + 1
    row_labels = tuple(sorted(rows))
    col_labels = tuple(sorted(cols))
    cells = np.zeros((len(row_labels), len(col_labels)))
    for i, r in enumerate(row_labels):
        for j, c in enumerate(col_labels):
            cells[i, j] = counts.get((r, c), 0)
    return ContingencyTable(row_labels=row_labels, col_labels=col_labels, cells=cells)


def chi_square_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution via the regularized incomplete gamma."""
    if x <= 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


def _trim_zero_margins(table: ContingencyTable) -> ContingencyTable:
    cells = table.cells
    row_ok = cells.sum(axis=1) > 0
    col_ok = cells.sum(axis=0) > 0
    if not row_ok.all() or not col_ok.all():
        dropped = [table.row_labels[i] for i in np.flatnonzero(~row_ok)] + \
                  [table.col_labels[j] for j in np.flatnonzero(~col_ok)]
        warnings.warn(f"contingency test: dropping zero-margin labels {dropped}")
        table = ContingencyTable(
            row_labels=tuple(np.asarray(table.row_labels, dtype=object)[row_ok]),
            col_labels=tuple(np.asarray(table.col_labels, dtype=object)[col_ok]),
            cells=cells[np.ix_(row_ok, col_ok)])
    if len(table.row_labels) < 2 or len(table.col_labels) < 2:
        raise ValidationError("contingency test: fewer than 2 rows or columns after trimming")
    if table.cells.sum() <= 0:
        raise ValidationError("contingency test: empty table")
    return table


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: int
    p_value: float

    def as_dict(self) -> dict:
        return {"statistic": self.statistic, "df": self.df, "p_value": self.p_value}


def _expected(cells: np.ndarray) -> np.ndarray:
    total = cells.sum()
    return np.outer(cells.sum(axis=1), cells.sum(axis=0)) / total


def g_test(table: ContingencyTable) -> TestResult:
    """Likelihood-ratio test G = 2 sum O ln(O/E); zero observed cells contribute 0."""
    table = _trim_zero_margins(table)
    O = table.cells
    E = _expected(O)
    mask = O > 0
    g = 2.0 * float(np.sum(O[mask] * np.log(O[mask] / E[mask])))
    df = (O.shape[0] - 1) * (O.shape[1] - 1)
    return TestResult(statistic=g, df=df, p_value=chi_square_sf(g, df))


def chi_square_test(table: ContingencyTable) -> TestResult:
    """Pearson's chi-squared test of independence."""
    table = _trim_zero_margins(table)
    O = table.cells
    E = _expected(O)
    stat = float(np.sum((O - E) ** 2 / E))
    df = (O.shape[0] - 1) * (O.shape[1] - 1)
    return TestResult(statistic=stat, df=df, p_value=chi_square_sf(stat, df))


@dataclass(frozen=True)
class MannWhitneyResult:
    u: float
    z: float
    p_value: float

    def as_dict(self) -> dict:
        return {"U": self.u, "z": self.z, "p_value": self.p_value}


def mann_whitney_u(sample_a: Sequence[float], sample_b: Sequence[float]) -> MannWhitneyResult:
    """Mann-Whitney U with mid-rank ties and the tie-corrected normal approximation.

    U is reported for sample_a; the two-sided p-value uses z without a
    continuity correction. Identical pooled values give p = 1.
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValidationError("mann_whitney_u: both samples must be nonempty")
    na, nb = a.size, b.size
    pooled = np.concatenate([a, b])
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(pooled.size)
    tie_term = 0.0
    i = 0
    while i < pooled.size:
        j = i
        while j < pooled.size and pooled[order[j]] == pooled[order[i]]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + 1 + j)
        t = j - i
        tie_term += t ** 3 - t
        i = j
    u = float(np.sum(ranks[:na]) - na * (na + 1) / 2.0)
    n = na + nb
    mu = na * nb / 2.0
    sigma2 = na * nb / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if sigma2 <= 0:
        return MannWhitneyResult(u=u, z=0.0, p_value=1.0)
    z = (u - mu) / math.sqrt(sigma2)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return MannWhitneyResult(u=u, z=float(z), p_value=float(p))


# ---------------------------------------------------------------------------
# survey representativeness

def representativeness(dataset: Dataset, subset_ids: Iterable[str],
                       discrete_keys: Sequence[str] = ("age",), alpha: float = 0.05) -> dict:
    """Compare the exposed survey subsample against the full panel, per variable.

    Categorical demographics get a chi-square test on the subsample-vs-panel
    count table; keys listed in discrete_keys (plus ideology) get Mann-Whitney.
    """
    subset = set(subset_ids)
    panel = list(dataset.survey_users)
    sub = [u for u in panel if u.id in subset]
    if not sub or not panel:
        raise ValidationError("representativeness: empty panel or subsample")

    keys = sorted({k for u in panel for k in u.demographics})
    results = {}
    for key in keys:
        sub_vals = [u.demographics.get(key) for u in sub if u.demographics.get(key) is not None]
        all_vals = [u.demographics.get(key) for u in panel if u.demographics.get(key) is not None]
        if not sub_vals or not all_vals:
            continue
        if key in discrete_keys:
            res = mann_whitney_u(sub_vals, all_vals)
            results[key] = {"test": "mann_whitney_u", **res.as_dict(),
                            "reject_at_5pct": res.p_value < alpha}
        else:
            cats = sorted(set(all_vals) | set(sub_vals))
            cells = np.array([[sub_vals.count(c) for c in cats],
                              [all_vals.count(c) for c in cats]], dtype=float)
            table = ContingencyTable(row_labels=("subsample", "panel"), col_labels=tuple(cats), cells=cells)
            res = chi_square_test(table)
            results[key] = {"test": "chi_square", **res.as_dict(),
                            "reject_at_5pct": res.p_value < alpha}

    sub_ideo = [u.ideology_score for u in sub if u.ideology_score is not None]
    all_ideo = [u.ideology_score for u in panel if u.ideology_score is not None]
    if sub_ideo and all_ideo:
        res = mann_whitney_u(sub_ideo, all_ideo)
        results["ideology"] = {"test": "mann_whitney_u", **res.as_dict(),
                               "reject_at_5pct": res.p_value < alpha}
    return results
