"""Pipeline configuration: one TOML file, strict validation, CLI flag overrides.

Unknown keys are rejected and every numeric field is checked against its
documented domain so misconfigurations fail fast with the offending field
named. The effective configuration is embedded in report.json for provenance.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from civiscope.model import ValidationError

DEFAULT_KEYWORDS = (
    "política", "político", "political", "politics", "democracia", "democracy",
    "bolsonaro", "lula", "candidato", "partido", "presidente",
    "federal", "ministro", "senador", "deputado", "governador", "prefeito", "vereador",
    "conservador", "liberal", "esquerda", "direita", "comunista", "nacionalista",
    "patriota", "feminista", "socialista", "ativista", "progressista",
    "jornalista", "journalist", "repórter", "comentarista", "influencer", "news",
)
DEFAULT_LOCATIONS = (
    "brazil", "brasil", "são paulo", "sao paulo", "rio de janeiro", "belo horizonte",
    "brasília", "brasilia", "salvador", "fortaleza", "curitiba", "recife", "porto alegre",
)


@dataclass
class PathsConfig:
    accounts: Optional[str] = None
    posts: Optional[str] = None
    follows: Optional[str] = None
    survey: Optional[str] = None
    labels: Optional[str] = None
    embeddings: Optional[str] = None


@dataclass
class WindowConfig:
    start: str = "2022-09-01"
    end: str = "2023-02-01"


@dataclass
class LabelingConfig:
    threshold: float = 0.7
    use_human: bool = False


@dataclass
class InfluencersConfig:
    min_followers: int = 1000
    keywords: list = field(default_factory=lambda: list(DEFAULT_KEYWORDS))
    locations: list = field(default_factory=lambda: list(DEFAULT_LOCATIONS))
    handle_allowlist: list = field(default_factory=list)


@dataclass
class CandidatesConfig:
    high_k: int = 50
    low_k: int = 25
    low_floor: Optional[float] = None           # None: 60th percentile rule
    round: int = 1
    seeds_file: Optional[str] = None            # pre-selected positive ids (post_id[,score] CSV)


@dataclass
class ClassifierConfig:
    l2: float = 1e-3
    lr: Optional[float] = None                  # None: inverse-Lipschitz step
    max_iter: int = 300
    tol: float = 1e-8
    folds: int = 10
    ensemble_members: int = 10
    single_dimensions: list = field(default_factory=lambda: ["IMP"])


@dataclass
class SplineConfig:
    trend_lambda: float = 0.6
    gcv_grid_min: float = 1e-6
    gcv_grid_max: float = 1e3
    gcv_grid_size: int = 40
    outlier_rule: str = "threshold"             # "threshold" | "top_k"
    outlier_threshold: Optional[float] = None   # None: classical 4/n
    outlier_k: int = 5
    svg: bool = True


@dataclass
class AudienceConfig:
    taus: list = field(default_factory=lambda: [0.1, 0.25, 0.5, 0.75, 0.9])
    quantile_groups: int = 4
    bootstrap: int = 1000
    distinct_users: bool = False


@dataclass
class FlowConfig:
    replicates: int = 100
    swap_factor: int = 10
    damping: float = 0.85
    pagerank_tol: float = 1e-10
    self_loops_only_null: bool = False    # stricter direct-flow null: freeze non-self-loop edges


@dataclass
class SynthConfig:
    n_survey_users: int = 30
    n_influencers: int = 40
    n_bystanders: int = 12
    n_days: int = 153                    # 2022-09-01 .. 2023-02-01
    base_posts_per_day: float = 0.25
    retweet_mean: float = 6.0
    motif_excess: float = 0.6
    p_follow_in: float = 0.5
    p_follow_out: float = 0.1
    embed_dim: int = 16
    embed_delta: float = 6.0
    spike_plan: list = field(default_factory=lambda: [[31, "IMP", 120], [129, "THREAT", 80]])


@dataclass
class PipelineConfig:
    seed: int = 0
    out_dir: str = "out"
    mask_handles: bool = False
    dimensions: list = field(default_factory=lambda: ["IMP", "PHAVPR", "HSST", "THREAT"])
    paths: PathsConfig = field(default_factory=PathsConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    labeling: LabelingConfig = field(default_factory=LabelingConfig)
    influencers: InfluencersConfig = field(default_factory=InfluencersConfig)
    candidates: CandidatesConfig = field(default_factory=CandidatesConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    spline: SplineConfig = field(default_factory=SplineConfig)
    audience: AudienceConfig = field(default_factory=AudienceConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = dict(vars(value)) if hasattr(value, "__dataclass_fields__") else value
        return out


_SECTIONS = {f.name: f.type for f in fields(PipelineConfig)
             if f.name not in ("seed", "out_dir", "mask_handles", "dimensions")}


def _apply_section(obj, data: dict, section: str):
    allowed = {f.name for f in fields(obj)}
    for key, value in data.items():
        if key not in allowed:
            raise ValidationError(f"config: unknown key {section}.{key}")
        setattr(obj, key, value)
    return obj


def load_config(path) -> PipelineConfig:
    with open(path, "rb") as fh:
        try:
            data = _toml.load(fh)
        except _toml.TOMLDecodeError as exc:
            raise ValidationError(f"config {path}: {exc}")
    return config_from_dict(data)


def config_from_dict(data: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    for key, value in data.items():
        if key in ("seed", "out_dir", "mask_handles", "dimensions"):
            setattr(cfg, key, value)
        elif key in _SECTIONS:
            if not isinstance(value, dict):
                raise ValidationError(f"config: section {key} must be a table")
            _apply_section(getattr(cfg, key), value, key)
        else:
            raise ValidationError(f"config: unknown key {key}")
    validate_config(cfg)
    return cfg


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(f"config: {message}")


def validate_config(cfg: PipelineConfig) -> None:
    from civiscope.model import Dimension

    _check(isinstance(cfg.seed, int), "seed must be an integer")
    for d in cfg.dimensions:
        _check(d in {x.value for x in Dimension}, f"dimensions contains unknown value {d!r}")
    _check(0.0 < cfg.labeling.threshold < 1.0, "labeling.threshold must be in (0,1)")
    _check(cfg.influencers.min_followers >= 0, "influencers.min_followers must be >= 0")
    _check(len(cfg.influencers.keywords) > 0, "influencers.keywords must be nonempty")
    _check(cfg.candidates.high_k >= 0, "candidates.high_k must be >= 0")
    _check(cfg.candidates.low_k >= 0, "candidates.low_k must be >= 0")
    if cfg.candidates.low_floor is not None:
        _check(-1.0 <= cfg.candidates.low_floor <= 1.0, "candidates.low_floor must be in [-1,1]")
    _check(cfg.classifier.l2 >= 0, "classifier.l2 must be >= 0")
    _check(cfg.classifier.max_iter >= 1, "classifier.max_iter must be >= 1")
    _check(cfg.classifier.tol > 0, "classifier.tol must be > 0")
    _check(cfg.classifier.folds >= 2, "classifier.folds must be >= 2")
    _check(cfg.classifier.ensemble_members >= 1, "classifier.ensemble_members must be >= 1")
    _check(cfg.spline.trend_lambda > 0, "spline.trend_lambda must be > 0")
    _check(cfg.spline.gcv_grid_min > 0, "spline.gcv_grid_min must be > 0")
    _check(cfg.spline.gcv_grid_max > cfg.spline.gcv_grid_min,
           "spline.gcv_grid_max must exceed gcv_grid_min")
    _check(cfg.spline.gcv_grid_size >= 2, "spline.gcv_grid_size must be >= 2")
    _check(cfg.spline.outlier_rule in ("threshold", "top_k"),
           "spline.outlier_rule must be 'threshold' or 'top_k'")
    if cfg.spline.outlier_threshold is not None:
        _check(cfg.spline.outlier_threshold >= 0, "spline.outlier_threshold must be >= 0")
    _check(cfg.spline.outlier_k >= 0, "spline.outlier_k must be >= 0")
    for tau in cfg.audience.taus:
        _check(0.0 < tau < 1.0, f"audience.taus value {tau} outside (0,1)")
    _check(cfg.audience.quantile_groups >= 2, "audience.quantile_groups must be >= 2")
    _check(cfg.audience.bootstrap >= 0, "audience.bootstrap must be >= 0")
    _check(cfg.flow.replicates >= 30, "flow.replicates must be >= 30")
    _check(cfg.flow.swap_factor >= 1, "flow.swap_factor must be >= 1")
    _check(0.0 < cfg.flow.damping < 1.0, "flow.damping must be in (0,1)")
    _check(cfg.flow.pagerank_tol > 0, "flow.pagerank_tol must be > 0")
    _check(cfg.synth.n_survey_users > 0, "synth.n_survey_users must be > 0")
    _check(cfg.synth.n_influencers > 0, "synth.n_influencers must be > 0")
    _check(cfg.synth.n_days > 0, "synth.n_days must be > 0")
    _check(0.0 <= cfg.synth.motif_excess <= 1.0, "synth.motif_excess must be in [0,1]")


def mask_identifier(value: str) -> str:
    """Privacy mask: first two characters plus '**'."""
    return value[:2] + "**"
