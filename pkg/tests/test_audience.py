import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import account, make_dataset, post
from civiscope.audience import (
    ContingencyTable,
    DensityRecord,
    chi_square_sf,
    chi_square_test,
    crosstab,
    density_table,
    exposure_count,
    g_test,
    incivility_density,
    jaccard,
    mann_whitney_u,
    quantile_groups,
    quantile_regression,
    representativeness,
    retweet_index,
    survey_follower_map,
)
from civiscope.model import Dimension, ValidationError
from oracles import chi2_sf_oracle, lp_quantile_oracle, pinball

IMP = Dimension.IMP


# ---------------------------------------------------------------------------
# density

def test_density_definition():
    posts = [post(f"p{i}", "v", labels={IMP: 1 if i < 5 else 0}) for i in range(20)]
    ds = make_dataset([account("v", influencer=True)], posts=posts)
    rec = incivility_density(ds, "v", IMP)
    assert (rec.uncivil_count, rec.total_count, rec.density) == (5, 20, 0.25)


def test_density_zero_uncivil():
    posts = [post(f"p{i}", "v") for i in range(4)]
    ds = make_dataset([account("v", influencer=True)], posts=posts)
    assert incivility_density(ds, "v", IMP).density == 0.0


def test_density_zero_posts_is_error_and_excluded_from_table():
    ds = make_dataset([account("v", influencer=True), account("w", influencer=True)],
                      posts=[post("p", "w")])
    with pytest.raises(ValidationError):
        incivility_density(ds, "v", IMP)
    records, excluded = density_table(ds, IMP)
    assert [r.influencer_id for r in records] == ["w"]
    assert excluded == ("v",)


def test_density_planted_37_of_100(tmp_path):
    from civiscope.ingest import attach_labels, ingest_corpus
    from civiscope.model import StudyWindow, parse_utc
    from civiscope.synth import SynthSpec, generate
    spec = SynthSpec(seed=17, n_days=40, density_overrides={0: {"IMP": (37, 100)}})
    manifest = generate(spec, tmp_path)
    assert manifest["densities"]["inf_000"]["IMP"] == [37, 100]
    window = StudyWindow(parse_utc(manifest["window"][0]), parse_utc(manifest["window"][1]))
    res = ingest_corpus(str(tmp_path / "accounts.jsonl"), str(tmp_path / "posts.jsonl"),
                        None, None, window)
    ds = attach_labels(res.dataset, str(tmp_path / "labels.csv"))
    rec = incivility_density(ds, "inf_000", IMP)
    assert (rec.uncivil_count, rec.total_count) == (37, 100)
    assert rec.density == pytest.approx(0.37)


# ---------------------------------------------------------------------------
# exposure

def exposure_fixture():
    accounts = [account("v", influencer=True), account("w", influencer=True),
                account("u1"), account("u2"), account("u3"), account("u4"), account("u5")]
    posts = [post("p1", "v", labels={IMP: 1})]
    follows = [("u1", "v"), ("u2", "v"), ("u3", "v"), ("u4", "w"), ("u5", "w")]
    survey = ["u1", "u2", "u3", "u4", "u5"]
    return accounts, posts, follows, survey


def test_exposure_direct_only():
    accounts, posts, follows, survey = exposure_fixture()
    ds = make_dataset(accounts, posts=posts, follows=follows, survey=survey)
    rec = exposure_count(ds, survey_follower_map(ds), "v", IMP)
    assert rec.exposure == 3


def test_exposure_with_retweet_relay():
    accounts, posts, follows, survey = exposure_fixture()
    # w (2 survey followers) retweets v's uncivil post: 3 + 2 = 5
    posts = posts + [post("p2", "w", day=1, retweet_of=("p1", "v"), labels={IMP: 1})]
    ds = make_dataset(accounts, posts=posts, follows=follows, survey=survey)
    rec = exposure_count(ds, survey_follower_map(ds), "v", IMP)
    assert rec.exposure == 5
    # distinct-user mode: u1..u5 all distinct -> also 5
    rec_d = exposure_count(ds, survey_follower_map(ds), "v", IMP, distinct_users=True)
    assert rec_d.exposure == 5


def test_exposure_zero_when_no_uncivil_posts():
    accounts, posts, follows, survey = exposure_fixture()
    posts = [post("p1", "v")]     # civil
    ds = make_dataset(accounts, posts=posts, follows=follows, survey=survey)
    assert exposure_count(ds, survey_follower_map(ds), "v", IMP).exposure == 0


def test_exposure_self_retweet_not_double_relayed():
    accounts, posts, follows, survey = exposure_fixture()
    posts = posts + [post("p2", "v", day=1, retweet_of=("p1", "v"), labels={IMP: 1})]
    ds = make_dataset(accounts, posts=posts, follows=follows, survey=survey)
    # p1 direct 3 + p2 (its own uncivil post) direct 3; self-retweet adds no relay term
    assert exposure_count(ds, survey_follower_map(ds), "v", IMP).exposure == 6


def test_exposure_dedup_union_differs_from_sum():
    accounts, posts, follows, survey = exposure_fixture()
    follows = follows + [("u1", "w")]     # u1 follows both
    posts = posts + [post("p2", "w", day=1, retweet_of=("p1", "v"), labels={IMP: 1})]
    ds = make_dataset(accounts, posts=posts, follows=follows, survey=survey)
    fmap = survey_follower_map(ds)
    assert exposure_count(ds, fmap, "v", IMP).exposure == 6            # 3 + 3 per-post sum
    assert exposure_count(ds, fmap, "v", IMP, distinct_users=True).exposure == 5


# ---------------------------------------------------------------------------
# quantile regression

def test_exact_line_any_tau():
    x = np.linspace(0, 5, 20)
    y = 2 * x
    fits = quantile_regression(x, y, taus=(0.1, 0.5, 0.9), bootstrap_B=0)
    for fit in fits.values():
        assert fit.beta1 == pytest.approx(2.0, abs=1e-6)
        assert fit.beta0 == pytest.approx(0.0, abs=1e-6)


def test_median_matches_lad_oracle():
    rng = np.random.default_rng(1)
    x = rng.normal(size=40)
    y = 1.5 * x - 2 + rng.laplace(size=40)
    fit = quantile_regression(x, y, taus=(0.5,), bootstrap_B=0)[0.5]
    obj_oracle, b0, b1 = lp_quantile_oracle(x, y, 0.5)
    assert fit.objective <= obj_oracle + 1e-6
    assert fit.beta1 == pytest.approx(b1, abs=1e-4)


def test_objective_within_tolerance_of_lp_oracle_many_instances():
    rng = np.random.default_rng(2)
    for trial in range(12):
        n = int(rng.integers(12, 50))
        x = rng.normal(size=n)
        y = rng.normal(size=n) + rng.normal() * x
        tau = float(rng.choice([0.1, 0.25, 0.5, 0.75, 0.9]))
        fit = quantile_regression(x, y, taus=(tau,), bootstrap_B=0)[tau]
        obj_oracle, _, _ = lp_quantile_oracle(x, y, tau)
        assert fit.objective <= obj_oracle + 1e-6
        assert fit.objective == pytest.approx(
            pinball(y - (fit.beta0 + fit.beta1 * x), tau), abs=1e-12)


def test_negative_residual_fraction_balances_tau():
    rng = np.random.default_rng(3)
    n = 60
    x = rng.normal(size=n)
    y = 0.5 * x + rng.normal(size=n)
    for tau in (0.1, 0.5, 0.9):
        fit = quantile_regression(x, y, taus=(tau,), bootstrap_B=0)[tau]
        frac_neg = np.mean(y - (fit.beta0 + fit.beta1 * x) < 0)
        assert abs(frac_neg - tau) <= 2 / n + 1e-12


def test_planted_heteroskedasticity_ordering():
    rng = np.random.default_rng(4)
    n = 200
    x = rng.uniform(0, 1, size=n)
    y = 1.0 + x * rng.normal(size=n) * 3.0       # spread grows with x
    fits = quantile_regression(x, y, taus=(0.1, 0.9), bootstrap_B=0)
    assert fits[0.9].beta1 > fits[0.1].beta1


def test_bootstrap_ci_and_p_deterministic():
    rng = np.random.default_rng(5)
    x = rng.normal(size=50)
    y = 2 * x + rng.normal(size=50)
    a = quantile_regression(x, y, taus=(0.5,), bootstrap_B=200, seed=9)[0.5]
    b = quantile_regression(x, y, taus=(0.5,), bootstrap_B=200, seed=9)[0.5]
    assert a == b
    assert a.beta1_ci[0] < 2.0 < a.beta1_ci[1]
    assert a.p_value < 0.05


def test_quantile_regression_validation():
    with pytest.raises(ValidationError):
        quantile_regression(np.ones(20), np.arange(20), taus=(0.5,))
    with pytest.raises(ValidationError):
        quantile_regression(np.arange(20), np.arange(20), taus=(1.5,))
    with pytest.raises(ValidationError):
        quantile_regression(np.arange(5), np.arange(5), taus=(0.5,))


# ---------------------------------------------------------------------------
# quantile groups

def rec(aid, dens):
    return DensityRecord(influencer_id=aid, dimension=IMP,
                         uncivil_count=int(dens * 100), total_count=100)


def test_eight_records_four_groups_of_two():
    records = [rec(f"a{i}", d) for i, d in enumerate([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8])]
    groups = quantile_groups(records, 4)
    assert groups == {"a0": 1, "a1": 1, "a2": 2, "a3": 2, "a4": 3, "a5": 3, "a6": 4, "a7": 4}


def test_all_equal_densities_id_ordered():
    records = [rec(f"a{i}", 0.5) for i in range(8)]
    groups = quantile_groups(records, 4)
    assert groups == {"a0": 1, "a1": 1, "a2": 2, "a3": 2, "a4": 3, "a5": 3, "a6": 4, "a7": 4}


def test_thousand_records_match_sort_oracle():
    rng = np.random.default_rng(6)
    records = [DensityRecord(f"a{i:04d}", IMP, int(rng.integers(0, 101)), 100) for i in range(1000)]
    groups = quantile_groups(records, 4)
    ordered = sorted(records, key=lambda r: (r.density, r.influencer_id))
    for g in range(1, 5):
        chunk = ordered[(g - 1) * 250: g * 250]
        assert all(groups[r.influencer_id] == g for r in chunk)


def test_raising_density_never_lowers_group():
    rng = np.random.default_rng(7)
    records = [DensityRecord(f"a{i:02d}", IMP, int(rng.integers(0, 50)), 100) for i in range(20)]
    base = quantile_groups(records, 4)
    for i in range(20):
        bumped = list(records)
        r = bumped[i]
        bumped[i] = DensityRecord(r.influencer_id, IMP, min(100, r.uncivil_count + 30), 100)
        new = quantile_groups(bumped, 4)
        assert new[r.influencer_id] >= base[r.influencer_id]


def test_fewer_records_than_k():
    with pytest.raises(ValidationError):
        quantile_groups([rec("a", 0.5)], 4)


# ---------------------------------------------------------------------------
# jaccard

def test_jaccard_cases():
    assert jaccard({1, 2, 3}, {1, 2, 3}) == 1.0
    assert jaccard({1}, {2}) == 0.0
    assert jaccard({1, 2, 3}, {2, 3, 4}) == 0.5     # hand count: 2 shared / 4 total
    assert jaccard(set(), set()) == 1.0


@settings(max_examples=50, deadline=None)
@given(st.sets(st.integers(0, 20)), st.sets(st.integers(0, 20)))
def test_jaccard_symmetric_and_equality_iff_one(a, b):
    assert jaccard(a, b) == jaccard(b, a)
    assert (jaccard(a, b) == 1.0) == (a == b)


# ---------------------------------------------------------------------------
# contingency tests; frozen values were computed with exact fractions + mpmath

def table(cells, rows=None, cols=None):
    cells = np.asarray(cells, dtype=float)
    rows = rows or tuple(f"r{i}" for i in range(cells.shape[0]))
    cols = cols or tuple(f"c{j}" for j in range(cells.shape[1]))
    return ContingencyTable(row_labels=tuple(rows), col_labels=tuple(cols), cells=cells)


def test_g_test_proportional_table_is_zero():
    t = table([[10, 20], [20, 40]])     # exactly proportional to margins
    res = g_test(t)
    assert res.statistic == pytest.approx(0.0, abs=1e-12)
    assert res.p_value == pytest.approx(1.0, abs=1e-12)


def test_g_test_2x2_frozen():
    res = g_test(table([[10, 20], [30, 40]]))
    assert res.statistic == pytest.approx(0.80434864609648637, abs=1e-10)
    assert res.df == 1
    assert res.p_value == pytest.approx(0.36979636792989547, abs=1e-4)


def test_g_test_2x3_frozen():
    res = g_test(table([[12, 5, 9], [7, 14, 3]]))
    assert res.statistic == pytest.approx(8.8297768567499131, abs=1e-10)
    assert res.df == 2
    assert res.p_value == pytest.approx(0.012095903609416421, abs=1e-4)


def test_g_test_zero_cell_frozen():
    res = g_test(table([[0, 10], [5, 5]]))
    assert res.statistic == pytest.approx(8.6304621735534278, abs=1e-10)
    assert res.p_value == pytest.approx(0.0033058769121899494, abs=1e-4)


def test_zero_margin_dropped_with_warning():
    t = table([[10, 0, 20], [30, 0, 40]])
    with pytest.warns(UserWarning, match="zero-margin"):
        res = g_test(t)
    assert res.df == 1
    assert res.statistic == pytest.approx(0.80434864609648637, abs=1e-10)


def test_chi_square_frozen():
    res = chi_square_test(table([[10, 20], [30, 40]]))
    assert res.statistic == pytest.approx(50 / 63, abs=1e-10)
    assert res.p_value == pytest.approx(0.37299848361348713, abs=1e-4)
    res2 = chi_square_test(table([[12, 5, 9], [7, 14, 3]]))
    assert res2.statistic == pytest.approx(100925 / 11856, abs=1e-10)
    assert res2.p_value == pytest.approx(0.014174882222918852, abs=1e-4)


def test_chi_square_identical_distributions():
    res = chi_square_test(table([[5, 10, 15], [5, 10, 15]]))
    assert res.statistic == pytest.approx(0.0, abs=1e-12)
    assert res.p_value == pytest.approx(1.0, abs=1e-12)


def test_chi2_tail_against_series_continued_fraction_oracle():
    # spot value: Q(3.84, 1) ~ 0.05
    assert chi_square_sf(3.84, 1) == pytest.approx(0.05, abs=5e-4)
    for x, df in ((0.5, 1), (3.84, 1), (5.991, 2), (7.0, 3), (25.0, 10), (1e-3, 1), (80.0, 4)):
        assert chi_square_sf(x, df) == pytest.approx(chi2_sf_oracle(x, df), abs=1e-10)


def test_g_and_pearson_agree_on_large_tables():
    # near-independence tables: both statistics are moderate and first-order equal
    rng = np.random.default_rng(8)
    for _ in range(5):
        p_row = rng.dirichlet(np.ones(2) * 10)
        p_col = rng.dirichlet(np.ones(3) * 10)
        joint = np.outer(p_row, p_col) * (1.0 + rng.uniform(-0.05, 0.05, size=(2, 3)))
        joint /= joint.sum()
        counts = rng.multinomial(10_000, joint.ravel()).reshape(2, 3)
        g = g_test(table(counts)).statistic
        chi = chi_square_test(table(counts)).statistic
        if max(g, chi) > 1e-3:
            assert abs(g - chi) / max(g, chi) < 0.05


# ---------------------------------------------------------------------------
# Mann-Whitney; frozen values hand-computed with mid-ranks in fractions

def test_mwu_separated_samples_frozen():
    res = mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert res.u == 0.0
    assert res.z == pytest.approx(-1.9639610121239314, abs=1e-10)
    assert res.p_value == pytest.approx(0.049534613435626741, abs=1e-4)


def test_mwu_with_ties_frozen():
    res = mann_whitney_u([1, 2, 2, 4], [2, 3, 5])
    assert res.u == 3.0                              # mid-ranks: 1, 3, 3, 6 for sample a
    assert res.z == pytest.approx(-1.1006990785580142, abs=1e-10)
    assert res.p_value == pytest.approx(0.27102764742937661, abs=1e-4)


def test_mwu_third_frozen_instance():
    res = mann_whitney_u([5, 6, 7, 8, 9], [1, 2, 3, 4, 10])
    assert res.u == 20.0
    assert res.z == pytest.approx(1.5666989036012805, abs=1e-10)
    assert res.p_value == pytest.approx(0.11718508719813805, abs=1e-4)


def test_mwu_identical_values_p_one():
    res = mann_whitney_u([3, 3, 3], [3, 3])
    assert res.p_value == 1.0


def test_mwu_calibration_under_null():
    rng = np.random.default_rng(9)
    base = rng.normal(size=60)
    ok = 0
    for _ in range(100):
        perm = rng.permutation(60)
        res = mann_whitney_u(base[perm[:30]], base[perm[30:]])
        ok += int(res.p_value > 0.05)
    assert ok >= 94


# ---------------------------------------------------------------------------
# crosstab

def test_crosstab_all_ones():
    entities = [("a", "x"), ("a", "y"), ("b", "x"), ("b", "y")]
    t = crosstab(entities, row_key=lambda e: e[0], col_key=lambda e: e[1])
    assert t.cells.tolist() == [[1.0, 1.0], [1.0, 1.0]]


def test_crosstab_unresolved_maps_to_unlabeled():
    t = crosstab([("a", None)], row_key=lambda e: e[0], col_key=lambda e: e[1])
    assert t.col_labels == ("unlabeled",)


def test_crosstab_empty_untestable():
    t = crosstab([], row_key=lambda e: e, col_key=lambda e: e)
    assert t.cells.size == 0
    with pytest.raises(ValidationError):
        g_test(t)


def test_crosstab_planted_type_split(tmp_path):
    from civiscope.synth import SynthSpec, generate
    plan = {1: {"individual": 1.0}, 2: {"individual": 1.0}, 3: {"individual": 1.0},
            4: {"individual": 0.6, "politician": 0.4}}
    spec = SynthSpec(seed=23, n_influencers=40, n_days=30, type_plan=plan)
    manifest = generate(spec, tmp_path)
    assert manifest["type_by_quantile"]["4"] == {"individual": 6, "politician": 4}


# ---------------------------------------------------------------------------
# representativeness

def test_representative_subsample_not_rejected():
    from civiscope.model import SurveyUser
    rng = np.random.default_rng(10)
    users = []
    for i in range(400):
        users.append(SurveyUser(
            id=f"u{i}",
            demographics={"age": int(rng.integers(18, 70)),
                          "gender": ["female", "male"][int(rng.integers(0, 2))],
                          "income": ["low", "mid", "high"][int(rng.integers(0, 3))]},
            ideology_score=int(rng.integers(-5, 6))))
    accounts = [account(u.id) for u in users]
    ds = make_dataset(accounts, survey=users)
    subset = {u.id for u in users if rng.random() < 0.4}
    results = representativeness(ds, subset)
    assert set(results) == {"age", "gender", "income", "ideology"}
    assert not any(r["reject_at_5pct"] for r in results.values())
