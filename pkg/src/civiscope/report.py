"""Pipeline stages, artifact writers, and the consolidated report.

Each stage reads the in-memory dataset, writes its artifact files into the
output directory, and returns its report section as a plain dict. The
`report` subcommand runs every stage in order and merges the sections into
report.json; given the same inputs, config, and root seed the merged report
is byte-identical across runs. When ground_truth.json (from the synthetic
generator) is present, a cross-check section compares computed statistics
against the planted values.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from civiscope import audience as aud
from civiscope import classifier as clf
from civiscope import dynamics as dyn
from civiscope import embeddings as emb
from civiscope import flows
from civiscope.config import PipelineConfig, mask_identifier
from civiscope.ingest import (
    attach_labels,
    dataset_summary,
    identify_influencers,
    ingest_corpus,
)
from civiscope.model import Dimension, StudyWindow, ValidationError, parse_utc

DEFAULT_FILE_NAMES = {
    "accounts": "accounts.jsonl",
    "posts": "posts.jsonl",
    "follows": "follows.csv",
    "survey": "survey.jsonl",
    "labels": "labels.csv",
    "embeddings": "embeddings.jsonl",
}

# fixed per-stage seed offsets keep stage RNG streams independent of each other
SEED_TRAIN, SEED_QREG, SEED_FLOW, SEED_CANDIDATES = 100, 200, 300, 400


def resolve_path(cfg: PipelineConfig, key: str, required: bool = True) -> Optional[str]:
    """Configured path, or the conventional file name inside out_dir."""
    configured = getattr(cfg.paths, key)
    path = configured or os.path.join(cfg.out_dir, DEFAULT_FILE_NAMES[key])
    if not os.path.exists(path):
        if required:
            raise ValidationError(f"paths.{key}: file not found at {path}")
        return None
    return path


def active_dimensions(cfg: PipelineConfig, only: Optional[str] = None) -> list:
    dims = [Dimension(d) for d in cfg.dimensions]
    if only is not None:
        wanted = Dimension(only)
        if wanted not in dims:
            raise ValidationError(f"dimension {only} is not enabled in the config")
        dims = [wanted]
    return dims


def _mask(cfg: PipelineConfig):
    return mask_identifier if cfg.mask_handles else (lambda s: s)


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=1) + "\n")


def _fmt(value) -> str:
    return repr(float(value))


# ---------------------------------------------------------------------------
# dataset loading

@dataclass
class PipelineData:
    dataset: object
    ingest_info: dict
    store: Optional[emb.EmbeddingStore] = None


def load_pipeline_data(cfg: PipelineConfig, need_embeddings: bool = False) -> PipelineData:
    window = StudyWindow(parse_utc(cfg.window.start), parse_utc(cfg.window.end))
    result = ingest_corpus(
        resolve_path(cfg, "accounts"),
        resolve_path(cfg, "posts"),
        resolve_path(cfg, "follows", required=False),
        resolve_path(cfg, "survey", required=False),
        window,
    )
    dataset = result.dataset
    labels_path = resolve_path(cfg, "labels", required=False)
    if labels_path:
        dataset = attach_labels(dataset, labels_path, threshold=cfg.labeling.threshold)
    selection = identify_influencers(
        dataset,
        keyword_list=cfg.influencers.keywords,
        min_followers=cfg.influencers.min_followers,
        location_filter=cfg.influencers.locations,
        handle_allowlist=cfg.influencers.handle_allowlist,
    )
    info = {"counts": result.counts, "dropped_posts": result.dropped_posts,
            "labels_attached": bool(labels_path)}
    store = None
    if need_embeddings:
        store = emb.load_embeddings(resolve_path(cfg, "embeddings"))
    return PipelineData(dataset=selection.dataset, ingest_info=info, store=store)


# ---------------------------------------------------------------------------
# stages

def stage_ingest(cfg: PipelineConfig, data: PipelineData) -> dict:
    summary = dataset_summary(data.dataset, use_human=cfg.labeling.use_human)
    section = {"ingest": data.ingest_info, "summary": summary.as_dict()}
    _write_json(os.path.join(cfg.out_dir, "ingest_summary.json"), section)
    return section


def stage_influencers(cfg: PipelineConfig, data: PipelineData) -> dict:
    mask = _mask(cfg)
    rows = sorted(data.dataset.influencer_ids)
    with open(os.path.join(cfg.out_dir, "influencers.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["account_id", "handle", "account_type", "follower_count"])
        for aid in rows:
            acct = data.dataset.accounts[aid]
            writer.writerow([mask(aid), mask(acct.handle), acct.account_type.value, acct.follower_count])
    return {"count": len(rows)}


def _read_seed_ids(path) -> list:
    """Pre-selection file: one post_id per line, optional score column, optional header."""
    ids = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip():
                continue
            if lineno == 1 and row[0].strip() == "post_id":
                continue
            ids.append(row[0].strip())
    if not ids:
        raise ValidationError(f"seeds file {path} holds no post ids")
    return ids


def stage_candidates(cfg: PipelineConfig, data: PipelineData, dimension: Dimension) -> dict:
    """Emit the next annotation batch for one dimension.

    Seed positives come from the configured pre-selection file when present,
    else from coder-annotated positives, else from machine positives. Only
    coder-annotated posts count as already labeled: the batch exists to pick
    posts for manual annotation, so machine labels do not exclude a post.
    """
    store = data.store
    coder_labeled = {p.id for p in data.dataset.posts
                     if p.id in store.vectors and p.label_for(dimension, use_human=True) is not None}
    if cfg.candidates.seeds_file:
        positives = [pid for pid in _read_seed_ids(cfg.candidates.seeds_file)
                     if pid in store.vectors]
    else:
        positives = [p.id for p in data.dataset.posts
                     if p.id in store.vectors and p.label_for(dimension, use_human=True) == 1]
        if not positives:
            positives = [p.id for p in data.dataset.posts
                         if p.id in store.vectors and p.label_for(dimension) == 1]
    labeled = set(positives) | coder_labeled
    if not positives:
        raise ValidationError(f"select-candidates: no labeled positives for {dimension.value}")
    batch = emb.select_candidates(
        store, positives, excluded_ids=labeled,
        high_k=cfg.candidates.high_k, low_k=cfg.candidates.low_k,
        low_floor=cfg.candidates.low_floor,
        seed=cfg.seed + SEED_CANDIDATES, round_index=cfg.candidates.round)
    name = f"candidates_round_{batch.round}.csv"
    with open(os.path.join(cfg.out_dir, name), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["post_id", "band", "similarity"])
        for pid, sim in batch.high_band:
            writer.writerow([pid, "high", _fmt(sim)])
        for pid, sim in batch.low_band:
            writer.writerow([pid, "low", _fmt(sim)])
    return {"dimension": dimension.value, "round": batch.round,
            "high": len(batch.high_band), "low": len(batch.low_band),
            "shortfall_high": batch.shortfall_high, "shortfall_low": batch.shortfall_low,
            "low_floor": batch.low_floor}


def _training_matrix(data: PipelineData, dimension: Dimension, use_human: bool):
    ids = []
    ys = []
    for post in data.dataset.posts:
        label = post.label_for(dimension, use_human=use_human)
        if label is not None and post.id in data.store.vectors:
            ids.append(post.id)
            ys.append(label)
    if not ids:
        return None, None
    return data.store.matrix(ids), np.asarray(ys, dtype=int)


def _spec_for(cfg: PipelineConfig, dimension: Dimension) -> clf.ClassifierSpec:
    kind = "single" if dimension.value in cfg.classifier.single_dimensions else "ensemble"
    return clf.ClassifierSpec(kind=kind, l2=cfg.classifier.l2, lr=cfg.classifier.lr,
                              max_iter=cfg.classifier.max_iter, tol=cfg.classifier.tol,
                              ensemble_members=cfg.classifier.ensemble_members)


def stage_train(cfg: PipelineConfig, data: PipelineData, only: Optional[str] = None) -> dict:
    section = {}
    for dim in active_dimensions(cfg, only):
        i = cfg.dimensions.index(dim.value)
        X, y = _training_matrix(data, dim, cfg.labeling.use_human)
        if X is None or np.unique(y).size < 2:
            section[dim.value] = {"skipped": "fewer than two classes in the labeled data"}
            continue
        spec = _spec_for(cfg, dim)
        seed = cfg.seed + SEED_TRAIN + i
        model = spec.train(X, y, seed=seed)
        clf.save_model(model, os.path.join(cfg.out_dir, f"model_{dim.value}.txt"), seed=seed)
        report = clf.cross_validate(X, y, k=cfg.classifier.folds, spec=spec, seed=seed)
        payload = report.as_dict()
        payload["n_samples"] = int(y.shape[0])
        payload["n_positive"] = int(y.sum())
        _write_json(os.path.join(cfg.out_dir, f"eval_{dim.value}.json"), payload)
        section[dim.value] = payload
    return section


def stage_classify(cfg: PipelineConfig, data: PipelineData, only: Optional[str] = None) -> dict:
    section = {}
    ids = sorted(data.store.vectors)
    X = data.store.matrix(ids)
    label_by_post = {p.id: p for p in data.dataset.posts}
    for dim in active_dimensions(cfg, only):
        model_path = os.path.join(cfg.out_dir, f"model_{dim.value}.txt")
        if not os.path.exists(model_path):
            raise ValidationError(
                f"classify: model for {dim.value} not found at {model_path}; run train first")
        model = clf.load_model(model_path)
        probs = model.predict_proba(X)
        labels = clf.assign_labels(probs, threshold=cfg.labeling.threshold)
        with open(os.path.join(cfg.out_dir, f"classified_{dim.value}.csv"), "w",
                  encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["post_id", "prob", "label"])
            for pid, prob, label in zip(ids, probs, labels):
                writer.writerow([pid, _fmt(prob), int(label)])
        attached = [(label_by_post[pid].label_for(dim), int(lab))
                    for pid, lab in zip(ids, labels)
                    if pid in label_by_post and label_by_post[pid].label_for(dim) is not None]
        agreement = (sum(1 for a, b in attached if a == b) / len(attached)) if attached else None
        section[dim.value] = {"n_scored": len(ids), "n_positive": int(labels.sum()),
                              "threshold": cfg.labeling.threshold,
                              "agreement_with_attached": agreement}
    return section


def _write_series_svg(path, series, trend, gcv_fit, outlier_dates) -> None:
    """Standalone SVG line plot: counts, fixed-lambda trend, GCV fit, outlier dots."""
    width, height, pad = 800, 300, 40
    n = len(series)
    y_max = max(float(series.counts.max()), 1.0)

    def sx(i):
        return pad + (width - 2 * pad) * (i / max(n - 1, 1))

    def sy(v):
        return height - pad - (height - 2 * pad) * (v / y_max)

    def polyline(values, color, dash=""):
        pts = " ".join(f"{sx(i):.2f},{sy(max(v, 0.0)):.2f}" for i, v in enumerate(values))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        return f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{extra} points="{pts}"/>'

    outliers = {d for d in outlier_dates}
    dots = "".join(
        f'<circle cx="{sx(i):.2f}" cy="{sy(float(series.counts[i])):.2f}" r="3" fill="#cc2222"/>'
        for i, d in enumerate(series.dates) if d in outliers)
    label = series.dimension.value if series.dimension else "series"
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
        f'<rect width="{width}" height="{height}" fill="white"/>'
        f'<text x="{pad}" y="{pad - 16}" font-family="sans-serif" font-size="13">'
        f'{label}: daily uncivil posts, trend, GCV fit, outliers</text>'
        + polyline(series.counts.tolist(), "#bbbbbb")
        + polyline(trend.tolist(), "#1f4e8c")
        + polyline(gcv_fit.tolist(), "#2c8c4e", dash="4 3")
        + dots + "</svg>\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)


def stage_dynamics(cfg: PipelineConfig, data: PipelineData, only: Optional[str] = None) -> dict:
    section = {}
    grid = np.logspace(np.log10(cfg.spline.gcv_grid_min), np.log10(cfg.spline.gcv_grid_max),
                       cfg.spline.gcv_grid_size)
    for dim in active_dimensions(cfg, only):
        series = dyn.build_daily_series(data.dataset, dim, use_human=cfg.labeling.use_human)
        trend = dyn.fit_smoothing_spline(series, cfg.spline.trend_lambda)
        gcv = dyn.select_lambda_gcv(series, grid)
        best = dyn.fit_smoothing_spline(series, gcv.lambda_star)
        d = dyn.cooks_distance(best)
        if cfg.spline.outlier_rule == "top_k":
            rule = dyn.TopKRule(cfg.spline.outlier_k)
        else:
            rule = dyn.ThresholdRule(cfg.spline.outlier_threshold)
        outliers = dyn.detect_outliers(series, best, rule)
        outlier_dates = {o.date for o in outliers}

        name = os.path.join(cfg.out_dir, f"dynamics_{dim.value}.csv")
        trend_col = f"fitted_trend_lambda{cfg.spline.trend_lambda:g}"
        with open(name, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["date", "count", trend_col, "fitted_gcv", "cooks_d", "outlier_flag"])
            for i, date in enumerate(series.dates):
                writer.writerow([date.isoformat(), int(series.counts[i]), _fmt(trend.fitted[i]),
                                 _fmt(best.fitted[i]), _fmt(d[i]), int(date in outlier_dates)])
        if cfg.spline.svg:
            _write_series_svg(os.path.join(cfg.out_dir, f"dynamics_{dim.value}.svg"),
                              series, trend.fitted, best.fitted, outlier_dates)
        section[dim.value] = {
            "trend_lambda": cfg.spline.trend_lambda,
            "gcv_lambda": gcv.lambda_star,
            "edf_trend": trend.edf,
            "edf_gcv": best.edf,
            "outliers": [{"date": o.date.isoformat(), "cooks_d": o.distance} for o in outliers],
        }
    return section


def stage_audience(cfg: PipelineConfig, data: PipelineData, only: Optional[str] = None) -> dict:
    mask = _mask(cfg)
    dataset = data.dataset
    use_human = cfg.labeling.use_human
    section = {}
    groups_by_dim = {}
    audiences_by_dim = {}
    followers = aud.survey_follower_map(dataset)

    for dim in active_dimensions(cfg, only):
        i = cfg.dimensions.index(dim.value)
        records, excluded = aud.density_table(dataset, dim, use_human=use_human)
        with open(os.path.join(cfg.out_dir, f"density_{dim.value}.csv"), "w",
                  encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["influencer_id", "uncivil_count", "total_count", "density"])
            for r in records:
                writer.writerow([mask(r.influencer_id), r.uncivil_count, r.total_count, _fmt(r.density)])

        exposures = {r.influencer_id: r.exposure
                     for r in aud.exposure_table(dataset, dim, distinct_users=cfg.audience.distinct_users,
                                                 use_human=use_human)}
        with open(os.path.join(cfg.out_dir, f"exposure_{dim.value}.csv"), "w",
                  encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["influencer_id", "exposure"])
            for aid in sorted(exposures):
                writer.writerow([mask(aid), exposures[aid]])

        x = np.array([r.density for r in records])
        y = np.array([exposures.get(r.influencer_id, 0) for r in records], dtype=float)
        qreg_payload = {}
        if x.shape[0] >= 10 and np.unique(x).size > 1:
            fits = aud.quantile_regression(x, y, taus=cfg.audience.taus,
                                           bootstrap_B=cfg.audience.bootstrap,
                                           seed=cfg.seed + SEED_QREG + i)
            qreg_payload = {str(tau): fit.as_dict() for tau, fit in fits.items()}
        _write_json(os.path.join(cfg.out_dir, f"qreg_{dim.value}.json"), qreg_payload)

        k = cfg.audience.quantile_groups
        groups = aud.quantile_groups(records, k) if len(records) >= k else {}
        groups_by_dim[dim] = groups
        audiences_by_dim[dim] = {
            q: frozenset().union(*(followers.get(aid, frozenset())
                                   for aid in groups if groups[aid] == q)) if groups else frozenset()
            for q in range(1, k + 1)}

        section[dim.value] = {
            "n_disseminators": len(records),
            "excluded_zero_post": len(excluded),
            "qreg": qreg_payload,
            "density_mean": float(np.mean(x)) if len(records) else None,
            "exposure_mean": float(np.mean(y)) if len(records) else None,
        }

    dims = list(groups_by_dim)
    jc_rows = []
    for q in range(1, cfg.audience.quantile_groups + 1):
        for a in range(len(dims)):
            for b in range(a + 1, len(dims)):
                da, db = dims[a], dims[b]
                ga = {aid for aid, g in groups_by_dim[da].items() if g == q}
                gb = {aid for aid, g in groups_by_dim[db].items() if g == q}
                jc_rows.append(("disseminators", q, da.value, db.value, aud.jaccard(ga, gb)))
                jc_rows.append(("audiences", q, da.value, db.value,
                                aud.jaccard(audiences_by_dim[da][q], audiences_by_dim[db][q])))
    with open(os.path.join(cfg.out_dir, "jaccard_matrix.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "quantile", "dim_a", "dim_b", "jaccard"])
        for row in jc_rows:
            writer.writerow([row[0], row[1], row[2], row[3], _fmt(row[4])])
    for kind in ("disseminators", "audiences"):
        vals = [r[4] for r in jc_rows if r[0] == kind]
        section[f"jaccard_{kind}"] = ({"mean": float(np.mean(vals)), "std": float(np.std(vals))}
                                      if vals else None)

    gtests = {}
    for dim, groups in groups_by_dim.items():
        if not groups:
            continue
        entries = [(aid, g) for aid, g in groups.items()]
        table = aud.crosstab(entries,
                             row_key=lambda e: dataset.accounts[e[0]].account_type.value,
                             col_key=lambda e: f"q{e[1]}")
        payload = {}
        try:
            payload["account_type"] = aud.g_test(table).as_dict()
        except ValidationError as exc:
            payload["account_type"] = {"error": str(exc)}
        id_counts: dict = {}
        for aid, g in entries:
            acct = dataset.accounts[aid]
            if acct.account_type.value != "individual":
                continue
            for ident in sorted(i.value for i in acct.identities):
                key = (ident, f"q{g}")
                id_counts[key] = id_counts.get(key, 0) + 1
        if id_counts:
            rows = tuple(sorted({r for r, _ in id_counts}))
            cols = tuple(sorted({c for _, c in id_counts}))
            cells = np.array([[id_counts.get((r, c), 0) for c in cols] for r in rows], dtype=float)
            try:
                payload["identities"] = aud.g_test(
                    aud.ContingencyTable(row_labels=rows, col_labels=cols, cells=cells)).as_dict()
            except ValidationError as exc:
                payload["identities"] = {"error": str(exc)}
        gtests[dim.value] = payload
    _write_json(os.path.join(cfg.out_dir, "gtests.json"), gtests)
    section["gtests"] = gtests

    exposed = frozenset().union(*(followers.get(aid, frozenset()) for aid in dataset.influencer_ids)) \
        if dataset.influencer_ids else frozenset()
    if exposed and dataset.survey_users:
        rep = aud.representativeness(dataset, exposed)
    else:
        rep = {}
    _write_json(os.path.join(cfg.out_dir, "representativeness.json"), rep)
    section["representativeness"] = rep
    return section


def stage_flow(cfg: PipelineConfig, data: PipelineData, only: Optional[str] = None) -> dict:
    mask = _mask(cfg)
    dataset = data.dataset
    graph = flows.build_bipartite(dataset)
    projection = flows.project_shared_followers(graph)
    section = {"projection_edges": len(projection.weights)}
    for dim in active_dimensions(cfg, only):
        i = cfg.dimensions.index(dim.value)
        retweets = flows.build_retweet_graph(dataset, dim, use_human=cfg.labeling.use_human)
        result = flows.motif_zscores(graph, retweets, dim, n_reps=cfg.flow.replicates,
                                     seed=cfg.seed + SEED_FLOW + i,
                                     self_loops_only=cfg.flow.self_loops_only_null)
        _write_json(os.path.join(cfg.out_dir, f"motifs_{dim.value}.json"), result.as_dict())

        if retweets.nodes:
            ranked = flows.pagerank_creators(retweets, damping=cfg.flow.damping,
                                             tol=cfg.flow.pagerank_tol)
        else:
            ranked = ()
        with open(os.path.join(cfg.out_dir, f"pagerank_{dim.value}.csv"), "w",
                  encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rank", "account", "type", "score"])
            for rank, (aid, score) in enumerate(ranked, start=1):
                acct = dataset.accounts.get(aid)
                writer.writerow([rank, mask(aid),
                                 acct.account_type.value if acct else "unknown", _fmt(score)])

        census = flows.count_motifs(graph, retweets, dim)
        profile = flows.motif_identity_profile(census, dataset.accounts)
        with open(os.path.join(cfg.out_dir, f"motif_identity_{dim.value}.csv"), "w",
                  encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["motif", "source_type", "retweeter_type", "count"])
            for t, n in sorted(profile.direct.items()):
                writer.writerow(["direct", t, "", n])
            for (a, b), n in sorted(profile.two_step.items()):
                writer.writerow(["two_step", a, b, n])
            for (a, b), n in sorted(profile.mixed.items()):
                writer.writerow(["mixed", a, b, n])

        section[dim.value] = {
            "motifs": result.as_dict()["motifs"],
            "n_retweet_events": len(retweets.events),
            "flagged_external": len(retweets.flagged_external),
            "pagerank_top": [{"account": mask(aid), "score": score} for aid, score in ranked[:10]],
            "identity_profile": profile.as_dict(),
        }
    return section


# ---------------------------------------------------------------------------
# ground-truth cross-checks and assembly

def ground_truth_checks(cfg: PipelineConfig, data: PipelineData, sections: dict) -> Optional[dict]:
    path = os.path.join(cfg.out_dir, "ground_truth.json")
    if not os.path.exists(path):
        return None
    with open(path, encoding="utf-8") as fh:
        gt = json.load(fh)
    dataset = data.dataset
    checks: dict = {}

    counts = sections["ingest"]["ingest"]["counts"]
    checks["counts_match"] = all(counts[k] == gt["counts"][k]
                                 for k in ("accounts", "posts", "follows", "survey_users"))
    checks["influencer_set_matches"] = sorted(dataset.influencer_ids) == sorted(gt["influencer_ids"])

    density_ok = True
    for aid, truth in gt["densities"].items():
        for dim_name, (unc, total) in truth.items():
            dim = Dimension(dim_name)
            if total == 0:
                continue
            rec = aud.incivility_density(dataset, aid, dim)
            if [rec.uncivil_count, rec.total_count] != [unc, total]:
                density_ok = False
    checks["densities_match"] = density_ok

    spikes = []
    dyn_section = sections.get("dynamics", {})
    for spike in gt["spikes"]:
        entry = {"dimension": spike["dimension"], "date": spike["date"], "extra": spike["extra"]}
        outliers = [o["date"] for o in dyn_section.get(spike["dimension"], {}).get("outliers", [])]
        entry["detected_as_outlier"] = spike["date"] in outliers
        spikes.append(entry)
    checks["spikes"] = spikes

    if gt.get("motif_signs"):
        flow_section = sections.get("flow", {})
        sign_checks = {}
        for dim_name, stats in flow_section.items():
            if not isinstance(stats, dict) or "motifs" not in stats:
                continue
            z_mixed = stats["motifs"]["mixed"]["z"]
            z_two = stats["motifs"]["two_step"]["z"]
            sign_checks[dim_name] = {
                "z_mixed": z_mixed, "z_two_step": z_two,
                "mixed_positive": z_mixed is not None and z_mixed > 0,
                "two_step_negative": z_two is not None and z_two < 0,
            }
        checks["motif_signs"] = sign_checks
    return checks


def run_report(cfg: PipelineConfig) -> dict:
    """Run every stage in order and merge the sections into report.json."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    data = load_pipeline_data(cfg, need_embeddings=True)
    sections = {
        "ingest": stage_ingest(cfg, data),
        "influencers": stage_influencers(cfg, data),
    }
    sections["classifier"] = stage_train(cfg, data)
    sections["classify"] = stage_classify(cfg, data)
    sections["dynamics"] = stage_dynamics(cfg, data)
    sections["audience"] = stage_audience(cfg, data)
    sections["flow"] = stage_flow(cfg, data)

    report = {"config": cfg.as_dict(), **sections}
    gtc = ground_truth_checks(cfg, data, sections)
    if gtc is not None:
        report["ground_truth_checks"] = gtc
    _write_json(os.path.join(cfg.out_dir, "report.json"), report)
    _write_summary_text(cfg, report)
    return report


def _write_summary_text(cfg: PipelineConfig, report: dict) -> None:
    lines = ["civiscope report", "================", ""]
    counts = report["ingest"]["ingest"]["counts"]
    lines.append(f"corpus: {counts['posts']} posts, {counts['accounts']} accounts, "
                 f"{counts['follows']} follows, {counts['survey_users']} survey users")
    lines.append(f"influencers: {report['influencers']['count']}")
    lines.append("")
    for dim, stats in sorted(report.get("dynamics", {}).items()):
        dates = ", ".join(o["date"] for o in stats["outliers"][:5]) or "none"
        lines.append(f"{dim}: gcv lambda {stats['gcv_lambda']:.4g}, outlier dates: {dates}")
    lines.append("")
    for dim, stats in sorted(report.get("flow", {}).items()):
        if not isinstance(stats, dict) or "motifs" not in stats:
            continue
        motifs = stats["motifs"]
        z = {k: (f"{v['z']:+.2f}" if v["z"] is not None else "n/a") for k, v in motifs.items()}
        lines.append(f"{dim}: direct {motifs['direct']['observed']} (z {z['direct']}), "
                     f"two-step {motifs['two_step']['observed']} (z {z['two_step']}), "
                     f"mixed {motifs['mixed']['observed']} (z {z['mixed']})")
    gtc = report.get("ground_truth_checks")
    if gtc:
        lines.append("")
        lines.append(f"ground truth: counts_match={gtc['counts_match']} "
                     f"influencers={gtc['influencer_set_matches']} densities={gtc['densities_match']}")
    with open(os.path.join(cfg.out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
