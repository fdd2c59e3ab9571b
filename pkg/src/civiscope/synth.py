"""Seeded synthetic-corpus generator with a ground-truth manifest.

Writes the exact corpus file formats the ingest layer consumes plus
ground_truth.json describing everything that was planted: qualifying
influencers, per-influencer uncivil densities, spike days, follow blocks,
expected motif z signs, and embedding cluster memberships. Follower structure
is a two-block model, so co-followership (and with it the mixed-motif excess)
is tunable through a single coefficient; retweet sources are drawn from the
retweeter's own block with that probability. Embedded posts get one cluster
axis per dimension at distance `embed_delta`, which controls classifier-test
difficulty. Generation is single-threaded and byte-deterministic per seed;
`generate` ends with a self-audit that re-reads the emitted files and checks
every manifest quantity against a direct recount.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from civiscope.model import DIMENSIONS, ValidationError, parse_utc

POLITICAL_PROFILES = (
    "jornalista política e democracia",
    "ativista pela democracia",
    "comentarista político",
    "candidato a deputado federal",
    "esquerda sempre, política todo dia",
    "direita conservadora, política nacional",
)
NEUTRAL_PROFILES = (
    "adoro futebol e música",
    "fotografia, viagens e café",
    "receitas da vovó",
    "memes e jogos",
)
BR_LOCATIONS = ("Brazil", "Brasil", "São Paulo", "Rio de Janeiro", "Belo Horizonte")
GENDERS = ("female", "male", "other")
ETHNICITIES = ("white", "black", "mixed", "asian", "indigenous")
RELIGIONS = ("catholic", "evangelical", "none", "other")
INCOMES = ("low", "mid", "high")
EDUCATIONS = ("primary", "secondary", "tertiary")


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_survey_users: int = 30
    n_influencers: int = 40
    n_bystanders: int = 12
    n_days: int = 120
    window_start: str = "2022-09-01"
    base_posts_per_day: float = 0.25
    uncivil_rates: dict = field(default_factory=lambda: {
        "IMP": 0.15, "PHAVPR": 0.05, "HSST": 0.07, "THREAT": 0.10})
    spike_plan: tuple = ()                      # (day_index, dimension, extra_posts)
    retweet_mean: float = 6.0                   # expected retweet events per influencer
    self_retweet_rate: float = 0.05
    external_source_rate: float = 0.05          # retweets of accounts outside the corpus roster
    motif_excess: float = 0.0                   # own-block source preference in (0,1]
    p_follow_in: float = 0.5
    p_follow_out: float = 0.1
    embed_dim: int = 16
    embed_delta: float = 6.0
    density_overrides: dict = field(default_factory=dict)   # influencer index -> {dim: (uncivil, total)}
    type_plan: Optional[dict] = None            # quantile -> {account type: fraction} for IMP density quantiles

    def validate(self) -> None:
        if min(self.n_survey_users, self.n_influencers, self.n_days) <= 0:
            raise ValidationError("synth: counts must be positive")
        if self.n_bystanders < 0:
            raise ValidationError("synth: n_bystanders must be >= 0")
        if self.embed_dim < len(DIMENSIONS):
            raise ValidationError("synth: embed_dim must be >= number of dimensions")
        for key, rate in self.uncivil_rates.items():
            if not 0.0 <= rate <= 1.0:
                raise ValidationError(f"synth: uncivil rate for {key} outside [0,1]")
        if not 0.0 <= self.motif_excess <= 1.0:
            raise ValidationError("synth: motif_excess outside [0,1]")
        for day, dim, extra in self.spike_plan:
            if not 0 <= day < self.n_days:
                raise ValidationError(f"synth: spike day {day} outside the window")
            if dim not in {d.value for d in DIMENSIONS}:
                raise ValidationError(f"synth: spike dimension {dim!r} unknown")
            if extra < 0:
                raise ValidationError("synth: spike magnitude must be >= 0")
        for idx, plan in self.density_overrides.items():
            if not 0 <= idx < self.n_influencers:
                raise ValidationError(f"synth: density override index {idx} out of range")
            for dim, (unc, total) in plan.items():
                if total <= 0 or not 0 <= unc <= total:
                    raise ValidationError(f"synth: bad density override {unc}/{total} for {dim}")


def _jdump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def _largest_remainder(fractions: dict, total: int) -> dict:
    """Integer allocation of `total` matching `fractions` exactly to +-1 per bucket."""
    raw = {k: v * total for k, v in sorted(fractions.items())}
    base = {k: int(v) for k, v in raw.items()}
    left = total - sum(base.values())
    order = sorted(raw, key=lambda k: (-(raw[k] - base[k]), k))
    for k in order[:left]:
        base[k] += 1
    return base


class _Corpus:
    """Mutable assembly buffers for one generation run."""

    def __init__(self):
        self.accounts = []
        self.posts = []            # dicts with extra key "_labels": {dim_name: prob}
        self.follows = []
        self.survey = []
        self.post_counter = 0

    def new_post_id(self) -> str:
        pid = f"p{self.post_counter:06d}"
        self.post_counter += 1
        return pid


def generate(spec: SynthSpec, out_dir) -> dict:
    """Write the corpus files plus ground_truth.json into out_dir; returns the manifest."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    os.makedirs(out_dir, exist_ok=True)
    start_ts = parse_utc(spec.window_start + "T00:00:00Z")
    end_ts = start_ts + spec.n_days * 86400

    corpus = _Corpus()
    dims = [d.value for d in DIMENSIONS]

    influencer_ids = [f"inf_{i:03d}" for i in range(spec.n_influencers)]
    survey_ids = [f"usr_{i:03d}" for i in range(spec.n_survey_users)]
    bystander_ids = [f"byst_{i:03d}" for i in range(spec.n_bystanders)]
    inf_block = {aid: i % 2 for i, aid in enumerate(influencer_ids)}
    usr_block = {uid: i % 2 for i, uid in enumerate(survey_ids)}

    # --- posts ------------------------------------------------------------
    def stamp(day: int) -> int:
        return start_ts + day * 86400 + int(rng.integers(0, 86400))

    posts_by_author: dict = {aid: [] for aid in influencer_ids}
    for idx, aid in enumerate(influencer_ids):
        override = spec.density_overrides.get(idx)
        if override:
            total = max(t for _, t in override.values())
        else:
            total = max(1, int(rng.poisson(spec.base_posts_per_day * spec.n_days)))
        labels = {d: np.zeros(total, dtype=bool) for d in dims}
        for d in dims:
            if override and d in override:
                unc = override[d][0]
                chosen = rng.permutation(total)[:unc]
                labels[d][chosen] = True
            else:
                labels[d] = rng.random(total) < spec.uncivil_rates.get(d, 0.0)
        for k in range(total):
            pid = corpus.new_post_id()
            post = {
                "id": pid,
                "author_id": aid,
                "ts": stamp(int(rng.integers(0, spec.n_days))),
                "text": f"post {pid} by {aid}",
                "retweet_of": None,
                "_labels": {d: float(0.7 + 0.3 * rng.random()) for d in dims if labels[d][k]},
            }
            corpus.posts.append(post)
            posts_by_author[aid].append(post)

    spike_truth = []
    spikers = [aid for i, aid in enumerate(influencer_ids) if i not in spec.density_overrides]
    for day, dim, extra in spec.spike_plan:
        for _ in range(extra):
            aid = spikers[int(rng.integers(0, len(spikers)))]
            pid = corpus.new_post_id()
            post = {
                "id": pid,
                "author_id": aid,
                "ts": stamp(day),
                "text": f"spike {pid} by {aid}",
                "retweet_of": None,
                "_labels": {dim: float(0.7 + 0.3 * rng.random())},
            }
            corpus.posts.append(post)
            posts_by_author[aid].append(post)
        spike_truth.append({"day_index": day, "dimension": dim, "extra": extra})

    # --- retweets ----------------------------------------------------------
    retweeters = [aid for i, aid in enumerate(influencer_ids) if i not in spec.density_overrides]
    external_counter = 0
    flagged_external = []
    for aid in retweeters:
        n_events = int(rng.poisson(spec.retweet_mean))
        own_block = [v for v in retweeters if inf_block[v] == inf_block[aid] and v != aid]
        others = [v for v in influencer_ids if v != aid]
        for _ in range(n_events):
            u = rng.random()
            if u < spec.self_retweet_rate and posts_by_author[aid]:
                source = aid
            elif u < spec.self_retweet_rate + spec.external_source_rate and bystander_ids:
                source = bystander_ids[int(rng.integers(0, len(bystander_ids)))]
            elif own_block and rng.random() < spec.motif_excess:
                source = own_block[int(rng.integers(0, len(own_block)))]
            else:
                source = others[int(rng.integers(0, len(others)))]

            if source in posts_by_author and posts_by_author[source]:
                pool = [p for p in posts_by_author[source] if p["_labels"]] or posts_by_author[source]
                target = pool[int(rng.integers(0, len(pool)))]
                target_id = target["id"]
                labels = dict(target["_labels"])
            else:
                target_id = f"ext_{external_counter:05d}"
                external_counter += 1
                labels = {d: float(0.7 + 0.3 * rng.random()) for d in dims
                          if rng.random() < 2 * spec.uncivil_rates.get(d, 0.0)}
                flagged_external.append(target_id)
            pid = corpus.new_post_id()
            corpus.posts.append({
                "id": pid,
                "author_id": aid,
                "ts": stamp(int(rng.integers(0, spec.n_days))),
                "text": f"RT {target_id}",
                "retweet_of": {"post_id": target_id, "author_id": source},
                "_labels": labels,
            })

    # --- account roster (types assigned after densities are realized) ------
    density_truth: dict = {}
    post_tally: dict = {}
    for post in corpus.posts:
        tally = post_tally.setdefault(post["author_id"], {d: 0 for d in dims + ["total"]})
        tally["total"] += 1
        for d in post["_labels"]:
            tally[d] += 1
    for aid in influencer_ids:
        tally = post_tally.get(aid, {d: 0 for d in dims + ["total"]})
        density_truth[aid] = {d: [tally[d], tally["total"]] for d in dims}

    imp_rank = sorted(influencer_ids,
                      key=lambda a: ((density_truth[a]["IMP"][0] / density_truth[a]["IMP"][1])
                                     if density_truth[a]["IMP"][1] else 0.0, a))
    quartile_of = {}
    for q, chunk in enumerate(np.array_split(np.arange(len(imp_rank)), 4), start=1):
        for i in chunk:
            quartile_of[imp_rank[i]] = q

    type_of: dict = {}
    type_truth: dict = {}
    if spec.type_plan:
        for q in sorted({quartile_of[a] for a in influencer_ids}):
            members = [a for a in imp_rank if quartile_of[a] == q]
            plan = spec.type_plan.get(q, {"individual": 1.0})
            alloc = _largest_remainder(plan, len(members))
            type_truth[str(q)] = dict(alloc)
            cursor = 0
            for t in sorted(alloc):
                for a in members[cursor:cursor + alloc[t]]:
                    type_of[a] = t
                cursor += alloc[t]
    else:
        choices = ("individual", "politician", "media")
        for aid in influencer_ids:
            type_of[aid] = choices[int(rng.integers(0, 3))]

    def influencer_identities() -> list:
        ids = []
        side = rng.random()
        if side < 0.4:
            ids.append("left")
        elif side < 0.65:
            ids.append("right")
        elif side < 0.75:
            ids.append("center")
        for extra in ("women", "black", "lgbtq", "religious"):
            if rng.random() < 0.12:
                ids.append(extra)
        return ids or ["unlabeled"]

    for aid in influencer_ids:
        corpus.accounts.append({
            "id": aid,
            "handle": aid,
            "account_type": type_of[aid],
            "follower_count": int(1000 + rng.integers(0, 100000)),
            "profile_text": POLITICAL_PROFILES[int(rng.integers(0, len(POLITICAL_PROFILES)))],
            "location": BR_LOCATIONS[int(rng.integers(0, len(BR_LOCATIONS)))],
            "identities": influencer_identities(),
        })
    for uid in survey_ids:
        corpus.accounts.append({
            "id": uid,
            "handle": uid,
            "account_type": "individual",
            "follower_count": int(rng.integers(0, 500)),
            "profile_text": NEUTRAL_PROFILES[int(rng.integers(0, len(NEUTRAL_PROFILES)))],
            "location": "Brazil",
            "identities": ["unlabeled"],
        })
    # bystanders fail exactly one influencer criterion each, cycling through the three
    for i, bid in enumerate(bystander_ids):
        mode = i % 3
        corpus.accounts.append({
            "id": bid,
            "handle": bid,
            "account_type": "individual",
            "follower_count": 999 if mode == 0 else int(5000 + rng.integers(0, 5000)),
            "profile_text": (POLITICAL_PROFILES[0] if mode != 1
                             else NEUTRAL_PROFILES[int(rng.integers(0, len(NEUTRAL_PROFILES)))]),
            "location": "Lisbon, Portugal" if mode == 2 else "Brazil",
            "identities": ["unlabeled"],
        })

    # --- follows and survey -------------------------------------------------
    for uid in survey_ids:
        for aid in influencer_ids:
            p = spec.p_follow_in if usr_block[uid] == inf_block[aid] else spec.p_follow_out
            if rng.random() < p:
                corpus.follows.append((uid, aid))

    for uid in survey_ids:
        corpus.survey.append({
            "id": uid,
            "demographics": {
                "age": int(rng.integers(18, 71)),
                "gender": GENDERS[int(rng.integers(0, len(GENDERS)))],
                "ethnicity": ETHNICITIES[int(rng.integers(0, len(ETHNICITIES)))],
                "religion": RELIGIONS[int(rng.integers(0, len(RELIGIONS)))],
                "income": INCOMES[int(rng.integers(0, len(INCOMES)))],
                "education": EDUCATIONS[int(rng.integers(0, len(EDUCATIONS)))],
            },
            "ideology": None if rng.random() < 0.1 else int(rng.integers(-5, 6)),
        })

    # --- embeddings: one cluster axis per dimension -------------------------
    cluster_truth: dict = {}
    embeddings = []
    for post in corpus.posts:
        center = np.zeros(spec.embed_dim)
        for axis, d in enumerate(dims):
            if d in post["_labels"]:
                center[axis] = spec.embed_delta
        vec = center + rng.standard_normal(spec.embed_dim)
        embeddings.append((post["id"], vec))
        cluster_truth[post["id"]] = {d: int(d in post["_labels"]) for d in dims}

    # --- write files ---------------------------------------------------------
    def fmt_ts(ts: int) -> str:
        return _dt.datetime.fromtimestamp(ts, _dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")

    paths = {name: os.path.join(out_dir, name) for name in (
        "accounts.jsonl", "posts.jsonl", "follows.csv", "survey.jsonl",
        "labels.csv", "embeddings.jsonl", "ground_truth.json")}

    with open(paths["accounts.jsonl"], "w", encoding="utf-8") as fh:
        for acct in corpus.accounts:
            fh.write(_jdump(acct) + "\n")
    with open(paths["posts.jsonl"], "w", encoding="utf-8") as fh:
        for post in corpus.posts:
            rec = {k: v for k, v in post.items() if k != "_labels"}
            rec["ts"] = fmt_ts(rec["ts"])
            fh.write(_jdump(rec) + "\n")
    with open(paths["follows.csv"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["follower_id", "followee_id"])
        writer.writerows(corpus.follows)
    with open(paths["survey.jsonl"], "w", encoding="utf-8") as fh:
        for rec in corpus.survey:
            fh.write(_jdump(rec) + "\n")
    n_label_rows = 0
    with open(paths["labels.csv"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["post_id", "dimension", "coder_id", "value", "prob"])
        for post in corpus.posts:
            for d in dims:
                if d in post["_labels"]:
                    writer.writerow([post["id"], d, "machine", 1, repr(post["_labels"][d])])
                else:
                    writer.writerow([post["id"], d, "machine", 0, ""])
                n_label_rows += 1
    with open(paths["embeddings.jsonl"], "w", encoding="utf-8") as fh:
        fh.write(_jdump({"dim": spec.embed_dim, "model": f"synth-clusters-seed{spec.seed}",
                         "count": len(embeddings)}) + "\n")
        for pid, vec in embeddings:
            fh.write(_jdump({"id": pid, "vector": [float(v) for v in vec]}) + "\n")

    window = [fmt_ts(start_ts), fmt_ts(end_ts)]
    day_totals: dict = {}
    for s in spike_truth:
        key = (s["day_index"], s["dimension"])
        day_totals[key] = 0
    for post in corpus.posts:
        day = (post["ts"] - start_ts) // 86400
        for d in post["_labels"]:
            if (day, d) in day_totals:
                day_totals[(day, d)] += 1
    for s in spike_truth:
        s["total_on_day"] = day_totals[(s["day_index"], s["dimension"])]
        s["date"] = fmt_ts(start_ts + s["day_index"] * 86400)[:10]

    manifest = {
        "seed": spec.seed,
        "window": window,
        "counts": {
            "accounts": len(corpus.accounts),
            "posts": len(corpus.posts),
            "follows": len(corpus.follows),
            "survey_users": len(corpus.survey),
            "label_rows": n_label_rows,
        },
        "influencer_ids": influencer_ids,
        "nonqualifying_ids": survey_ids + bystander_ids,
        "spikes": spike_truth,
        "densities": density_truth,
        "blocks": {"influencers": inf_block, "survey": usr_block},
        "motif_signs": ({"mixed": "+", "two_step": "-"} if spec.motif_excess > 0 else None),
        "flagged_external_targets": sorted(set(flagged_external)),
        "embedding": {"dim": spec.embed_dim, "delta": spec.embed_delta,
                      "clusters": cluster_truth},
        "type_by_quantile": type_truth or None,
        "quantile_of": quartile_of,
    }
    with open(paths["ground_truth.json"], "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=1) + "\n")

    _self_audit(paths, manifest)
    return manifest


def _self_audit(paths: dict, manifest: dict) -> None:
    """Re-read the emitted files and verify every manifest quantity by direct recount."""
    with open(paths["accounts.jsonl"], encoding="utf-8") as fh:
        n_accounts = sum(1 for line in fh if line.strip())
    with open(paths["survey.jsonl"], encoding="utf-8") as fh:
        n_survey = sum(1 for line in fh if line.strip())
    with open(paths["follows.csv"], encoding="utf-8") as fh:
        n_follows = sum(1 for _ in fh) - 1

    posts = []
    with open(paths["posts.jsonl"], encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                posts.append(json.loads(line))

    labels: dict = {}
    n_rows = 0
    with open(paths["labels.csv"], encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["value"] == "1":
                labels.setdefault(row["post_id"], set()).add(row["dimension"])
            n_rows += 1

    counts = manifest["counts"]
    checks = [
        ("accounts", n_accounts, counts["accounts"]),
        ("posts", len(posts), counts["posts"]),
        ("follows", n_follows, counts["follows"]),
        ("survey_users", n_survey, counts["survey_users"]),
        ("label_rows", n_rows, counts["label_rows"]),
    ]
    start_ts = parse_utc(manifest["window"][0])
    for spike in manifest["spikes"]:
        day, dim = spike["day_index"], spike["dimension"]
        n = sum(1 for p in posts
                if (parse_utc(p["ts"]) - start_ts) // 86400 == day and dim in labels.get(p["id"], ()))
        checks.append((f"spike day {day} {dim}", n, spike["total_on_day"]))

    recount: dict = {}
    for p in posts:
        author = p["author_id"]
        if author not in manifest["densities"]:
            continue
        tally = recount.setdefault(author, {"total": 0})
        tally["total"] += 1
        for d in labels.get(p["id"], ()):
            tally[d] = tally.get(d, 0) + 1
    for aid, truth in manifest["densities"].items():
        tally = recount.get(aid, {"total": 0})
        for d, (unc, total) in truth.items():
            checks.append((f"density {aid} {d}", [tally.get(d, 0), tally["total"]], [unc, total]))

    bad = [(name, got, want) for name, got, want in checks if got != want]
    if bad:
        raise AssertionError(f"synth self-audit failed: {bad[:5]}")
