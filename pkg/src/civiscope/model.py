"""Domain types: incivility dimensions, accounts, posts, follows, survey users, dataset.

A Dataset is immutable after construction; operations that add information
(label attachment, influencer marking) return a new revision and never touch
the input. All timestamps are UTC epoch seconds; the study window is
half-open [start, end) so daily bucketing is unambiguous.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Optional


class ValidationError(ValueError):
    """Input, schema, or configuration violation (CLI exit status 2)."""


class ConvergenceError(RuntimeError):
    """A numerical routine failed to converge (CLI exit status 3)."""


class Dimension(str, Enum):
    """The four incivility dimensions, each a distinct collective-norm violation."""

    IMP = "IMP"          # impoliteness (etiquette)
    PHAVPR = "PHAVPR"    # physical harm / violent political rhetoric (non-violence)
    HSST = "HSST"        # hate speech and stereotyping (equality, non-discrimination)
    THREAT = "THREAT"    # threats to democratic institutions and values


DIMENSIONS = tuple(Dimension)


class AccountType(str, Enum):
    POLITICIAN = "politician"
    MEDIA = "media"
    INDIVIDUAL = "individual"
    UNKNOWN = "unknown"


class Identity(str, Enum):
    """Self-disclosed socio-political identities annotated on profiles."""

    LEFT = "left"
    RIGHT = "right"
    CENTER = "center"
    LULA_CAMP = "lula_camp"
    BOLSONARO_CAMP = "bolsonaro_camp"
    WOMEN = "women"
    BLACK = "black"
    LGBTQ = "lgbtq"
    RELIGIOUS = "religious"
    UNLABELED = "unlabeled"


@dataclass(frozen=True)
class Account:
    id: str
    handle: str
    account_type: AccountType
    follower_count: int
    profile_text: str
    location: Optional[str] = None
    identities: frozenset = frozenset({Identity.UNLABELED})
    is_influencer: bool = False

    def __post_init__(self):
        if self.follower_count < 0:
            raise ValidationError(f"account {self.id}: negative follower_count")
        if not self.identities:
            object.__setattr__(self, "identities", frozenset({Identity.UNLABELED}))
        if Identity.LEFT in self.identities and Identity.RIGHT in self.identities:
            raise ValidationError(f"account {self.id}: left and right are mutually exclusive")


@dataclass(frozen=True)
class Retweet:
    """Provenance of a retweet: the reposted message and its original author."""

    post_id: str
    author_id: str

    def __post_init__(self):
        if not self.author_id:
            raise ValidationError("retweet_of with empty author_id")


@dataclass(frozen=True)
class Post:
    """A timestamped message with optional retweet provenance and labels.

    Machine labels/probabilities and human coder labels live in separate
    fields; analyses use machine labels unless explicitly switched.
    ``coder_labels`` is keyed by (dimension, coder_id).
    """

    id: str
    author_id: str
    timestamp: int
    text: str
    retweet_of: Optional[Retweet] = None
    machine_probs: Mapping = field(default_factory=dict)
    machine_labels: Mapping = field(default_factory=dict)
    coder_labels: Mapping = field(default_factory=dict)

    def label_for(self, dimension: Dimension, use_human: bool = False) -> Optional[int]:
        """Effective binary label, or None if unlabeled for this dimension.

        Human mode takes the strict majority over coders, ties resolved to 0.
        """
        if use_human:
            votes = [v for (d, _), v in self.coder_labels.items() if d is dimension]
            if not votes:
                return None
            return 1 if sum(votes) * 2 > len(votes) else 0
        return self.machine_labels.get(dimension)

    def is_uncivil(self, dimension: Dimension, use_human: bool = False) -> bool:
        return self.label_for(dimension, use_human) == 1


@dataclass(frozen=True)
class FollowEdge:
    follower_id: str
    followee_id: str

    def __post_init__(self):
        if self.follower_id == self.followee_id:
            raise ValidationError(f"self-follow edge for {self.follower_id}")


@dataclass(frozen=True)
class SurveyUser:
    id: str
    demographics: Mapping
    ideology_score: Optional[int] = None


@dataclass(frozen=True)
class StudyWindow:
    """Half-open [start, end) window in UTC epoch seconds."""

    start: int
    end: int

    def __post_init__(self):
        if self.end <= self.start:
            raise ValidationError("study window must satisfy start < end")

    def contains(self, ts: int) -> bool:
        return self.start <= ts < self.end

    @property
    def n_days(self) -> int:
        return (self.end - self.start + 86399) // 86400

    def day_index(self, ts: int) -> int:
        return (ts - self.start) // 86400

    def day_date(self, index: int) -> _dt.date:
        return _dt.datetime.fromtimestamp(self.start + index * 86400, _dt.timezone.utc).date()


@dataclass(frozen=True)
class Dataset:
    """Validated, immutable corpus: accounts, window-filtered posts, follows, survey users.

    Posts are sorted by (timestamp, id); every author/follower/followee/survey
    id resolves in the account table.
    """

    accounts: Mapping
    posts: tuple
    follows: tuple
    survey_users: tuple
    window: StudyWindow

    @property
    def survey_ids(self) -> frozenset:
        return frozenset(u.id for u in self.survey_users)

    @property
    def influencer_ids(self) -> frozenset:
        return frozenset(a.id for a in self.accounts.values() if a.is_influencer)

    def posts_by_author(self) -> dict:
        by_author: dict = {}
        for p in self.posts:
            by_author.setdefault(p.author_id, []).append(p)
        return by_author

    def with_accounts(self, accounts: Mapping) -> "Dataset":
        return replace(self, accounts=dict(accounts))

    def with_posts(self, posts: Iterable[Post]) -> "Dataset":
        ordered = tuple(sorted(posts, key=lambda p: (p.timestamp, p.id)))
        return replace(self, posts=ordered)


def parse_utc(value: str) -> int:
    """Parse an ISO-8601 UTC timestamp (or date) to epoch seconds."""
    text = value.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        stamp = _dt.datetime.fromisoformat(text)
    except ValueError as exc:
        raise ValidationError(f"bad ISO-8601 timestamp {value!r}") from exc
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=_dt.timezone.utc)
    return int(stamp.astimezone(_dt.timezone.utc).timestamp())


def format_utc(ts: int) -> str:
    return _dt.datetime.fromtimestamp(ts, _dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
