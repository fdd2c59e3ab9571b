"""Information-flow graph layers, motif census, configuration-model null, PageRank.

Three layers over one account universe: the bipartite survey-follower graph,
its shared-follower projection onto influencers, and the directed retweet
graph whose edge a -> w records w retweeting a. Exposure motifs are counted
per (survey user, uncivil message event): direct (original or self-retweet by
a followed account), two-step (relay from an unfollowed source), and mixed
(the user follows both source and relayer). Motif significance comes from
degree-preserving randomization of the retweet events; original posts stay
fixed, so only self-loop incidence can move the direct count, matching a null
that randomizes self-retweets.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from civiscope.model import (
    AccountType,
    ConvergenceError,
    Dataset,
    Dimension,
    ValidationError,
)


# ---------------------------------------------------------------------------
# follower layers

@dataclass(frozen=True)
class BipartiteFollowerGraph:
    survey_users: tuple
    influencers: tuple
    edges: frozenset         # (survey_user_id, influencer_id)

    def followers_of(self) -> dict:
        out = {v: set() for v in self.influencers}
        for u, v in self.edges:
            out[v].add(u)
        return {v: frozenset(s) for v, s in out.items()}


def build_bipartite(dataset: Dataset) -> BipartiteFollowerGraph:
    """Survey users on one side, influencers on the other, follow edges between."""
    survey = dataset.survey_ids
    influencers = dataset.influencer_ids
    edges = frozenset((e.follower_id, e.followee_id) for e in dataset.follows
                      if e.follower_id in survey and e.followee_id in influencers)
    return BipartiteFollowerGraph(survey_users=tuple(sorted(survey)),
                                  influencers=tuple(sorted(influencers)), edges=edges)


@dataclass(frozen=True)
class SharedFollowerProjection:
    nodes: tuple
    weights: dict            # (i, j) with i < j -> shared survey-follower count (>= 1)


def project_shared_followers(graph: BipartiteFollowerGraph) -> SharedFollowerProjection:
    """Weighted projection onto influencers; weight = number of common survey followers."""
    followed: dict = {}
    for u, v in graph.edges:
        followed.setdefault(u, []).append(v)
    weights: Counter = Counter()
    for vs in followed.values():
        vs = sorted(vs)
        for a in range(len(vs)):
            for b in range(a + 1, len(vs)):
                weights[(vs[a], vs[b])] += 1
    return SharedFollowerProjection(nodes=graph.influencers, weights=dict(weights))


# ---------------------------------------------------------------------------
# retweet layer

@dataclass(frozen=True)
class RetweetEvent:
    post_id: str
    source: str              # original author (information flows from here)
    retweeter: str


@dataclass(frozen=True)
class RetweetGraph:
    dimension: Optional[Dimension]
    nodes: tuple                   # every event endpoint plus original-post authors
    events: tuple                  # unit-weight RetweetEvents
    originals: dict                # author -> tuple of qualifying original (non-retweet) post ids
    flagged_external: tuple        # retweet post ids whose target post is outside the corpus

    def edge_weights(self) -> dict:
        weights: Counter = Counter()
        for e in self.events:
            weights[(e.source, e.retweeter)] += 1
        return dict(weights)

    def out_degrees(self) -> Counter:
        return Counter(e.source for e in self.events)

    def in_degrees(self) -> Counter:
        return Counter(e.retweeter for e in self.events)


def build_retweet_graph(dataset: Dataset, dimension_filter: Optional[Dimension] = None,
                        use_human: bool = False) -> RetweetGraph:
    """One event per retweet post; when a dimension is given, only posts labeled 1 qualify.

    A retweet whose target post is missing from the corpus still contributes an
    edge (author ids are carried in the provenance) and is flagged.
    """
    post_ids = {p.id for p in dataset.posts}
    events = []
    originals: dict = {}
    flagged = []
    for post in dataset.posts:
        if dimension_filter is not None and not post.is_uncivil(dimension_filter, use_human=use_human):
            continue
        if post.retweet_of is None:
            originals.setdefault(post.author_id, []).append(post.id)
        else:
            events.append(RetweetEvent(post_id=post.id, source=post.retweet_of.author_id,
                                       retweeter=post.author_id))
            if post.retweet_of.post_id not in post_ids:
                flagged.append(post.id)
    nodes = sorted({e.source for e in events} | {e.retweeter for e in events} | set(originals))
    return RetweetGraph(dimension=dimension_filter, nodes=tuple(nodes),
                        events=tuple(events),
                        originals={a: tuple(ps) for a, ps in originals.items()},
                        flagged_external=tuple(flagged))


# ---------------------------------------------------------------------------
# motif census

@dataclass(frozen=True)
class MotifCensus:
    dimension: Optional[Dimension]
    direct_by_source: dict       # poster -> exposure count
    two_step_by_pair: dict       # (source, retweeter) -> exposure count
    mixed_by_pair: dict          # (source, retweeter) -> exposure count

    @property
    def direct(self) -> int:
        return sum(self.direct_by_source.values())

    @property
    def two_step(self) -> int:
        return sum(self.two_step_by_pair.values())

    @property
    def mixed(self) -> int:
        return sum(self.mixed_by_pair.values())

    def counts(self) -> dict:
        return {"direct": self.direct, "two_step": self.two_step, "mixed": self.mixed}


def count_motifs(graph: BipartiteFollowerGraph, retweets: RetweetGraph,
                 dimension: Optional[Dimension] = None) -> MotifCensus:
    """Exact census over (survey user, message event) pairs.

    Follower sets are packed into integer bitmasks so each event costs a few
    popcounts; every exposed pair lands in exactly one motif class.
    """
    bit = {u: 1 << i for i, u in enumerate(graph.survey_users)}
    masks: dict = {v: 0 for v in graph.influencers}
    for u, v in graph.edges:
        masks[v] |= bit[u]

    direct: Counter = Counter()
    two_step: Counter = Counter()
    mixed: Counter = Counter()

    for author, posts in retweets.originals.items():
        m = masks.get(author, 0)
        if m:
            direct[author] += m.bit_count() * len(posts)

    for event in retweets.events:
        fw = masks.get(event.retweeter, 0)
        if not fw:
            continue
        if event.source == event.retweeter:
            direct[event.retweeter] += fw.bit_count()
            continue
        fa = masks.get(event.source, 0)
        both = (fw & fa).bit_count()
        if both:
            mixed[(event.source, event.retweeter)] += both
        only = fw.bit_count() - both
        if only:
            two_step[(event.source, event.retweeter)] += only

    return MotifCensus(dimension=dimension if dimension is not None else retweets.dimension,
                       direct_by_source=dict(direct), two_step_by_pair=dict(two_step),
                       mixed_by_pair=dict(mixed))


# ---------------------------------------------------------------------------
# configuration-model null

def randomize_retweets(retweets: RetweetGraph, seed, swap_factor: int = 10,
                       self_loops_only: bool = False) -> RetweetGraph:
    """Degree-preserving directed double-edge swaps on the event multigraph.

    swap_factor * |events| attempted swaps; each swap exchanges the retweeter
    stubs of two random events, so in- and out-degree sequences are preserved
    exactly. Self-loops may appear or vanish, which is the only channel by
    which the direct count can move under this null. With self_loops_only the
    swap pool is restricted to events that start out as self-retweets, leaving
    every other edge frozen (the stricter direct-flow null).
    """
    if swap_factor < 1:
        raise ValidationError("randomize_retweets: swap_factor must be >= 1")
    if self_loops_only:
        pool = [i for i, e in enumerate(retweets.events) if e.source == e.retweeter]
    else:
        pool = list(range(len(retweets.events)))
    m = len(pool)
    if m < 2:
        return retweets
    rng = np.random.default_rng(seed)
    retweeters = [e.retweeter for e in retweets.events]
    pairs = rng.integers(0, m, size=(swap_factor * m, 2))
    for a, b in pairs:
        if a != b:
            i, j = pool[a], pool[b]
            retweeters[i], retweeters[j] = retweeters[j], retweeters[i]
    events = tuple(replace(e, retweeter=w) for e, w in zip(retweets.events, retweeters))
    return replace(retweets, events=events, flagged_external=())


@dataclass(frozen=True)
class MotifStats:
    observed: int
    mean_rand: float
    std_rand: float
    z: Optional[float]
    note: Optional[str] = None

    def as_dict(self) -> dict:
        return {"observed": self.observed, "mean_rand": self.mean_rand,
                "std_rand": self.std_rand, "z": self.z, "note": self.note}


@dataclass(frozen=True)
class NullModelResult:
    dimension: Optional[Dimension]
    motifs: dict                 # motif name -> MotifStats
    n_reps: int
    seed: int

    def as_dict(self) -> dict:
        return {"dimension": self.dimension.value if self.dimension else None,
                "n_reps": self.n_reps, "seed": self.seed,
                "motifs": {k: v.as_dict() for k, v in self.motifs.items()}}


def motif_zscores(graph: BipartiteFollowerGraph, retweets: RetweetGraph,
                  dimension: Optional[Dimension] = None, n_reps: int = 100,
                  seed: int = 0, self_loops_only: bool = False) -> NullModelResult:
    """Observed motif counts against the randomized-retweet ensemble.

    Every replicate is checked for exact degree preservation. std = 0 leaves
    z undefined (noted) rather than inventing a value.
    """
    if n_reps < 30:
        raise ValidationError("motif_zscores: n_reps must be >= 30")
    observed = count_motifs(graph, retweets, dimension)
    base_out = retweets.out_degrees()
    base_in = retweets.in_degrees()

    reps = {"direct": [], "two_step": [], "mixed": []}
    streams = np.random.SeedSequence(seed).spawn(n_reps)
    for ss in streams:
        rand = randomize_retweets(retweets, np.random.default_rng(ss),
                                  self_loops_only=self_loops_only)
        if rand.out_degrees() != base_out or rand.in_degrees() != base_in:
            raise AssertionError("randomize_retweets broke a degree sequence")
        census = count_motifs(graph, rand, dimension)
        for name, value in census.counts().items():
            reps[name].append(value)

    obs_counts = observed.counts()
    motifs = {}
    for name, values in reps.items():
        arr = np.asarray(values, dtype=float)
        mean = float(arr.mean())
        std = float(arr.std(ddof=1))
        if std == 0.0:
            note = ("degenerate: motif constant under the null"
                    if obs_counts[name] == mean else
                    "undefined: zero null variance but observed differs from mean")
            motifs[name] = MotifStats(observed=obs_counts[name], mean_rand=mean, std_rand=std,
                                      z=None, note=note)
        else:
            motifs[name] = MotifStats(observed=obs_counts[name], mean_rand=mean, std_rand=std,
                                      z=(obs_counts[name] - mean) / std)
    return NullModelResult(dimension=observed.dimension, motifs=motifs, n_reps=n_reps, seed=seed)


# ---------------------------------------------------------------------------
# PageRank over the retweet layer

def pagerank_creators(retweets: RetweetGraph, damping: float = 0.85, tol: float = 1e-10,
                      max_iter: int = 100000) -> tuple:
    """Rank original creators by PageRank on the credit walk retweeter -> source.

    The transition is column-stochastic with retweet-count weights; nodes that
    retweeted nobody are dangling and their mass is spread uniformly. Power
    iteration stops when the L1 change drops below tol; scores sum to 1.
    """
    if not retweets.nodes:
        raise ValidationError("pagerank_creators: empty graph")
    if not 0.0 < damping < 1.0:
        raise ValidationError("pagerank_creators: damping must be in (0,1)")

    nodes = list(retweets.nodes)
    index = {v: i for i, v in enumerate(nodes)}
    n = len(nodes)

    # outgoing credit per retweeter: (source index, weight)
    credit: dict = {}
    for (src, dst), w in sorted(retweets.edge_weights().items()):
        credit.setdefault(index[dst], []).append((index[src], float(w)))
    rows = []
    cols = []
    vals = []
    dangling = np.ones(n, dtype=bool)
    for j, targets in credit.items():
        dangling[j] = False
        total = sum(w for _, w in targets)
        for i, w in targets:
            rows.append(i)
            cols.append(j)
            vals.append(w / total)
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    vals = np.asarray(vals, dtype=float)

    v = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        flow = np.zeros(n)
        np.add.at(flow, rows, vals * v[cols])
        dangling_mass = float(v[dangling].sum())
        new = damping * (flow + dangling_mass / n) + (1.0 - damping) / n
        if float(np.abs(new - v).sum()) < tol:
            v = new
            break
        v = new
    else:
        raise ConvergenceError(
            f"pagerank_creators: no convergence in {max_iter} iterations "
            f"(residual {float(np.abs(new - v).sum()):g})")
    ranked = sorted(zip(nodes, v.tolist()), key=lambda t: (-t[1], t[0]))
    return tuple(ranked)


# ---------------------------------------------------------------------------
# identity profiles

@dataclass(frozen=True)
class MotifIdentityProfile:
    dimension: Optional[Dimension]
    direct: dict                 # poster account type -> exposures
    two_step: dict               # (source type, retweeter type) -> exposures
    mixed: dict

    def as_dict(self) -> dict:
        return {
            "dimension": self.dimension.value if self.dimension else None,
            "direct": {k: v for k, v in sorted(self.direct.items())},
            "two_step": {f"{a}->{b}": v for (a, b), v in sorted(self.two_step.items())},
            "mixed": {f"{a}->{b}": v for (a, b), v in sorted(self.mixed.items())},
        }


def motif_identity_profile(census: MotifCensus, accounts) -> MotifIdentityProfile:
    """Account-type histograms per motif; ids outside the account table are 'unknown'."""
    def type_of(aid):
        acct = accounts.get(aid)
        return acct.account_type.value if acct is not None else AccountType.UNKNOWN.value

    direct: Counter = Counter()
    for aid, n in census.direct_by_source.items():
        direct[type_of(aid)] += n
    two_step: Counter = Counter()
    for (src, dst), n in census.two_step_by_pair.items():
        two_step[(type_of(src), type_of(dst))] += n
    mixed: Counter = Counter()
    for (src, dst), n in census.mixed_by_pair.items():
        mixed[(type_of(src), type_of(dst))] += n
    return MotifIdentityProfile(dimension=census.dimension, direct=dict(direct),
                                two_step=dict(two_step), mixed=dict(mixed))
