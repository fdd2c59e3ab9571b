"""Corpus ingestion, influencer identification, label attachment, summary statistics.

File formats (one record per line unless noted):
  accounts.jsonl  {"id","handle","account_type","follower_count","profile_text","location","identities":[...]}
  posts.jsonl     {"id","author_id","ts" (ISO-8601 UTC),"text","retweet_of":{"post_id","author_id"}|null}
  follows.csv     header follower_id,followee_id
  survey.jsonl    {"id","demographics":{...},"ideology":int|null}
  labels.csv      header post_id,dimension,coder_id,value[,prob]
"""

from __future__ import annotations

import csv
import json
import unicodedata
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

from civiscope.model import (
    DIMENSIONS,
    Account,
    AccountType,
    Dataset,
    Dimension,
    FollowEdge,
    Identity,
    Post,
    Retweet,
    StudyWindow,
    SurveyUser,
    ValidationError,
    parse_utc,
)

MACHINE_CODER = "machine"


@dataclass(frozen=True)
class IngestResult:
    dataset: Dataset
    dropped_posts: int        # posts rejected for falling outside the window

    @property
    def counts(self) -> dict:
        ds = self.dataset
        return {
            "accounts": len(ds.accounts),
            "posts": len(ds.posts),
            "follows": len(ds.follows),
            "survey_users": len(ds.survey_users),
        }


def _records(path, kind):
    """Yield (line_number, parsed_object) from a JSONL file, reporting bad lines."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{kind} line {lineno}: malformed JSON ({exc.msg})") from exc


def _require(obj, keys, kind, lineno):
    for key in keys:
        if key not in obj:
            raise ValidationError(f"{kind} line {lineno}: missing field {key!r}")


def _parse_account(lineno, obj) -> Account:
    _require(obj, ("id", "handle", "account_type", "follower_count", "profile_text"), "accounts", lineno)
    try:
        atype = AccountType(obj["account_type"])
    except ValueError:
        raise ValidationError(f"accounts line {lineno}: unknown account_type {obj['account_type']!r}")
    raw_ids = obj.get("identities") or []
    try:
        identities = frozenset(Identity(i) for i in raw_ids)
    except ValueError as exc:
        raise ValidationError(f"accounts line {lineno}: {exc}")
    count = obj["follower_count"]
    if not isinstance(count, int) or count < 0:
        raise ValidationError(f"accounts line {lineno}: follower_count must be a non-negative integer")
    try:
        return Account(
            id=str(obj["id"]),
            handle=str(obj["handle"]),
            account_type=atype,
            follower_count=count,
            profile_text=str(obj["profile_text"]),
            location=obj.get("location"),
            identities=identities or frozenset({Identity.UNLABELED}),
        )
    except ValidationError as exc:
        raise ValidationError(f"accounts line {lineno}: {exc}")


def _parse_post(lineno, obj) -> Post:
    _require(obj, ("id", "author_id", "ts", "text"), "posts", lineno)
    rt = obj.get("retweet_of")
    retweet = None
    if rt is not None:
        _require(rt, ("post_id", "author_id"), "posts(retweet_of)", lineno)
        try:
            retweet = Retweet(post_id=str(rt["post_id"]), author_id=str(rt["author_id"]))
        except ValidationError as exc:
            raise ValidationError(f"posts line {lineno}: {exc}")
    try:
        ts = parse_utc(obj["ts"])
    except ValidationError as exc:
        raise ValidationError(f"posts line {lineno}: {exc}")
    return Post(id=str(obj["id"]), author_id=str(obj["author_id"]), timestamp=ts,
                text=str(obj["text"]), retweet_of=retweet)


def ingest_corpus(account_path, post_path, follow_path=None, survey_path=None,
                  window: Optional[StudyWindow] = None) -> IngestResult:
    """Read and validate the corpus files into an immutable Dataset.

    Posts outside the half-open study window are dropped (counted, not an
    error). Malformed records, duplicate ids, and dangling references raise
    ValidationError with the offending line/id.
    """
    if window is None:
        raise ValidationError("a study window is required")

    accounts: dict = {}
    for lineno, obj in _records(account_path, "accounts"):
        acct = _parse_account(lineno, obj)
        if acct.id in accounts:
            raise ValidationError(f"accounts line {lineno}: duplicate account id {acct.id!r}")
        accounts[acct.id] = acct

    posts = []
    seen_posts = set()
    dropped = 0
    for lineno, obj in _records(post_path, "posts"):
        post = _parse_post(lineno, obj)
        if post.id in seen_posts:
            raise ValidationError(f"posts line {lineno}: duplicate post id {post.id!r}")
        seen_posts.add(post.id)
        if not window.contains(post.timestamp):
            dropped += 1
            continue
        if post.author_id not in accounts:
            raise ValidationError(
                f"posts line {lineno}: dangling reference, author_id {post.author_id!r} not in accounts")
        posts.append(post)
    posts.sort(key=lambda p: (p.timestamp, p.id))

    follows = []
    seen_edges = set()
    if follow_path is not None:
        with open(follow_path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["follower_id", "followee_id"]:
                raise ValidationError(f"follows: expected header follower_id,followee_id in {follow_path}")
            for lineno, row in enumerate(reader, start=2):
                a, b = row["follower_id"], row["followee_id"]
                if a not in accounts:
                    raise ValidationError(f"follows line {lineno}: dangling follower_id {a!r}")
                if b not in accounts:
                    raise ValidationError(f"follows line {lineno}: dangling followee_id {b!r}")
                if (a, b) in seen_edges:
                    raise ValidationError(f"follows line {lineno}: duplicate edge {a!r}->{b!r}")
                seen_edges.add((a, b))
                try:
                    follows.append(FollowEdge(a, b))
                except ValidationError as exc:
                    raise ValidationError(f"follows line {lineno}: {exc}")

    survey = []
    seen_survey = set()
    if survey_path is not None:
        for lineno, obj in _records(survey_path, "survey"):
            _require(obj, ("id", "demographics"), "survey", lineno)
            sid = str(obj["id"])
            if sid in seen_survey:
                raise ValidationError(f"survey line {lineno}: duplicate survey id {sid!r}")
            if sid not in accounts:
                raise ValidationError(f"survey line {lineno}: dangling reference, id {sid!r} not in accounts")
            seen_survey.add(sid)
            ideology = obj.get("ideology")
            if ideology is not None and not isinstance(ideology, int):
                raise ValidationError(f"survey line {lineno}: ideology must be int or null")
            survey.append(SurveyUser(id=sid, demographics=dict(obj["demographics"]), ideology_score=ideology))

    dataset = Dataset(accounts=accounts, posts=tuple(posts), follows=tuple(follows),
                      survey_users=tuple(survey), window=window)
    return IngestResult(dataset=dataset, dropped_posts=dropped)


def fold_text(text: str) -> str:
    """Case-fold and strip diacritics so 'Política' matches 'politica'."""
    folded = unicodedata.normalize("NFKD", text.casefold())
    return "".join(ch for ch in folded if not unicodedata.combining(ch))


@dataclass(frozen=True)
class InfluencerSelection:
    ids: frozenset
    dataset: Dataset     # revision with is_influencer marked on the selected accounts


def identify_influencers(dataset: Dataset, keyword_list: Sequence[str], min_followers: int = 1000,
                         location_filter: Optional[Sequence[str]] = None,
                         handle_allowlist: Sequence[str] = ()) -> InfluencerSelection:
    """Select influential political accounts and mark them on a new revision.

    An account qualifies when all three hold: follower_count >= min_followers;
    a keyword substring-matches the folded profile text (or the handle is on
    the explicit allowlist of party/politician/media accounts); and, if the
    account declares a location, it folds to a member of location_filter.
    Accounts without a location are not excluded by the location criterion.
    """
    if not keyword_list:
        raise ValidationError("keyword_list must be nonempty")
    if min_followers < 0:
        raise ValidationError("min_followers must be >= 0")

    keywords = [fold_text(k) for k in keyword_list]
    allow = {fold_text(h) for h in handle_allowlist}
    locations = None if location_filter is None else {fold_text(loc) for loc in location_filter}

    selected = set()
    for acct in dataset.accounts.values():
        if acct.follower_count < min_followers:
            continue
        profile = fold_text(acct.profile_text)
        if not (any(k in profile for k in keywords) or fold_text(acct.handle) in allow):
            continue
        if locations is not None and acct.location is not None:
            if fold_text(acct.location) not in locations:
                continue
        selected.add(acct.id)

    accounts = {aid: (replace(a, is_influencer=True) if aid in selected else replace(a, is_influencer=False))
                for aid, a in dataset.accounts.items()}
    return InfluencerSelection(ids=frozenset(selected), dataset=dataset.with_accounts(accounts))


def _parse_label_row(lineno, row, has_prob):
    post_id = row["post_id"]
    try:
        dim = Dimension(row["dimension"])
    except ValueError:
        raise ValidationError(f"labels line {lineno}: unknown dimension {row['dimension']!r}")
    coder = row["coder_id"]
    try:
        value = int(row["value"])
    except ValueError:
        raise ValidationError(f"labels line {lineno}: value {row['value']!r} is not an integer")
    if value not in (0, 1):
        raise ValidationError(f"labels line {lineno}: value {value} outside {{0,1}}")
    prob = None
    if has_prob and row.get("prob") not in (None, ""):
        prob = float(row["prob"])
        if not 0.0 <= prob <= 1.0:
            raise ValidationError(f"labels line {lineno}: probability {prob} outside [0,1]")
    return post_id, dim, coder, value, prob


def attach_labels(dataset: Dataset, label_file, threshold: float = 0.7) -> Dataset:
    """Merge a labels.csv file into a new dataset revision.

    Rows with coder_id == "machine" carry classifier output (value plus
    optional probability); any other coder_id is a human annotation.
    Conflicting values for the same (post, dimension, coder) are rejected,
    as is a machine label of 1 whose probability falls below the threshold.
    """
    post_index = {p.id: p for p in dataset.posts}
    machine: dict = {}   # post_id -> {dim: (value, prob)}
    human: dict = {}     # post_id -> {(dim, coder): value}

    with open(label_file, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip() for f in (reader.fieldnames or [])]
        if fields not in (["post_id", "dimension", "coder_id", "value"],
                          ["post_id", "dimension", "coder_id", "value", "prob"]):
            raise ValidationError(f"labels: expected header post_id,dimension,coder_id,value[,prob] in {label_file}")
        has_prob = "prob" in fields
        for lineno, row in enumerate(reader, start=2):
            post_id, dim, coder, value, prob = _parse_label_row(lineno, row, has_prob)
            if post_id not in post_index:
                raise ValidationError(f"labels line {lineno}: unknown post id {post_id!r}")
            if coder == MACHINE_CODER:
                if value == 1 and prob is not None and prob < threshold:
                    raise ValidationError(
                        f"labels line {lineno}: machine label 1 with probability {prob} below threshold {threshold}")
                prior = machine.setdefault(post_id, {}).get(dim)
                if prior is not None and prior != (value, prob):
                    raise ValidationError(f"labels line {lineno}: conflicting machine label for ({post_id}, {dim.value})")
                machine[post_id][dim] = (value, prob)
            else:
                key = (dim, coder)
                prior = human.setdefault(post_id, {}).get(key)
                if prior is not None and prior != value:
                    raise ValidationError(
                        f"labels line {lineno}: conflicting labels for ({post_id}, {dim.value}, {coder})")
                human[post_id][key] = value

    new_posts = []
    for post in dataset.posts:
        m = machine.get(post.id)
        h = human.get(post.id)
        if m is None and h is None:
            new_posts.append(post)
            continue
        probs = dict(post.machine_probs)
        labels = dict(post.machine_labels)
        coders = dict(post.coder_labels)
        for dim, (value, prob) in (m or {}).items():
            labels[dim] = value
            if prob is not None:
                probs[dim] = prob
        for key, value in (h or {}).items():
            coders[key] = value
        new_posts.append(replace(post, machine_probs=probs, machine_labels=labels, coder_labels=coders))
    return dataset.with_posts(new_posts)


@dataclass(frozen=True)
class DimensionSummary:
    posts: int          # posts labeled 1 for the dimension
    influencers: int    # distinct influencers authoring them
    followers: int      # survey users following at least one such influencer


@dataclass(frozen=True)
class SummaryStats:
    totals: dict
    per_dimension: dict
    labeled_samples: dict   # dimension -> count of posts with >= 1 human coder label

    def as_dict(self) -> dict:
        return {
            "totals": dict(self.totals),
            "per_dimension": {d.value: vars(s) for d, s in self.per_dimension.items()},
            "labeled_samples": {d.value: n for d, n in self.labeled_samples.items()},
        }


def dataset_summary(dataset: Dataset, use_human: bool = False) -> SummaryStats:
    """Corpus totals plus per-dimension uncivil post / disseminator / audience counts."""
    influencers = dataset.influencer_ids
    survey = dataset.survey_ids
    followed: dict = {}
    for edge in dataset.follows:
        if edge.follower_id in survey:
            followed.setdefault(edge.followee_id, set()).add(edge.follower_id)

    per_dim = {}
    labeled = {}
    for dim in DIMENSIONS:
        uncivil_authors = set()
        n_posts = 0
        n_human = 0
        for post in dataset.posts:
            if any(d is dim for (d, _) in post.coder_labels):
                n_human += 1
            if post.is_uncivil(dim, use_human=use_human):
                n_posts += 1
                if post.author_id in influencers:
                    uncivil_authors.add(post.author_id)
        audience = set()
        for aid in uncivil_authors:
            audience |= followed.get(aid, set())
        per_dim[dim] = DimensionSummary(posts=n_posts, influencers=len(uncivil_authors), followers=len(audience))
        labeled[dim] = n_human

    totals = {
        "accounts": len(dataset.accounts),
        "posts": len(dataset.posts),
        "follows": len(dataset.follows),
        "survey_users": len(dataset.survey_users),
        "influencers": len(influencers),
    }
    return SummaryStats(totals=totals, per_dimension=per_dim, labeled_samples=labeled)
