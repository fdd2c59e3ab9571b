import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from civiscope.model import (
    Account,
    AccountType,
    Dataset,
    FollowEdge,
    Post,
    Retweet,
    StudyWindow,
    SurveyUser,
    parse_utc,
)

WINDOW = StudyWindow(parse_utc("2022-09-01T00:00:00Z"), parse_utc("2023-02-01T00:00:00Z"))


def account(aid, *, handle=None, atype=AccountType.INDIVIDUAL, followers=10,
            profile="perfil comum", location="Brazil", influencer=False):
    return Account(id=aid, handle=handle or aid, account_type=atype, follower_count=followers,
                   profile_text=profile, location=location, is_influencer=influencer)


def post(pid, author, *, day=0, retweet_of=None, labels=None, probs=None, text="hello"):
    rt = Retweet(post_id=retweet_of[0], author_id=retweet_of[1]) if retweet_of else None
    return Post(id=pid, author_id=author, timestamp=WINDOW.start + day * 86400 + 600,
                text=text, retweet_of=rt,
                machine_labels=dict(labels or {}), machine_probs=dict(probs or {}))


def make_dataset(accounts, posts=(), follows=(), survey=(), window=WINDOW):
    return Dataset(
        accounts={a.id: a for a in accounts},
        posts=tuple(sorted(posts, key=lambda p: (p.timestamp, p.id))),
        follows=tuple(FollowEdge(*f) if isinstance(f, tuple) else f for f in follows),
        survey_users=tuple(SurveyUser(id=s, demographics={"age": 30}) if isinstance(s, str) else s
                           for s in survey),
        window=window,
    )


def write_corpus(tmpdir, accounts=(), posts=(), follows=(), survey=()):
    """Write raw corpus files; entries are plain dicts in the external schemas."""
    paths = {}
    paths["accounts"] = str(tmpdir / "accounts.jsonl")
    with open(paths["accounts"], "w") as fh:
        for a in accounts:
            fh.write(json.dumps(a) + "\n")
    paths["posts"] = str(tmpdir / "posts.jsonl")
    with open(paths["posts"], "w") as fh:
        for p in posts:
            fh.write(json.dumps(p) + "\n")
    paths["follows"] = str(tmpdir / "follows.csv")
    with open(paths["follows"], "w") as fh:
        fh.write("follower_id,followee_id\n")
        for a, b in follows:
            fh.write(f"{a},{b}\n")
    paths["survey"] = str(tmpdir / "survey.jsonl")
    with open(paths["survey"], "w") as fh:
        for s in survey:
            fh.write(json.dumps(s) + "\n")
    return paths


@pytest.fixture(scope="session")
def default_synth(tmp_path_factory):
    """One medium synthetic corpus shared by read-only tests."""
    from civiscope.synth import SynthSpec, generate

    out = tmp_path_factory.mktemp("synth_default")
    spec = SynthSpec(seed=1234, n_days=90, motif_excess=0.6,
                     spike_plan=((30, "IMP", 500),))
    manifest = generate(spec, out)
    return {"dir": out, "manifest": manifest, "spec": spec}
