"""Command-line entry point.

    civiscope <subcommand> --config <path> [--seed N] [--dimension D] [--mask-handles]

Subcommands: ingest, influencers, select-candidates, train, classify,
dynamics, audience, flow, synth, report. Exit status 0 on success, 2 on any
validation/configuration failure, 3 on numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from civiscope import report as stages
from civiscope import synth as synthmod
from civiscope.config import PipelineConfig, load_config
from civiscope.model import ConvergenceError, Dimension, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3

SUBCOMMANDS = ("ingest", "influencers", "select-candidates", "train", "classify",
               "dynamics", "audience", "flow", "synth", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="civiscope",
                                     description="incivility measurement and flow analysis")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", default=None, help="TOML configuration file")
    parser.add_argument("--seed", type=int, default=None, help="override the root seed")
    parser.add_argument("--dimension", default=None,
                        choices=[d.value for d in Dimension],
                        help="restrict per-dimension stages to one dimension")
    parser.add_argument("--mask-handles", action="store_true",
                        help="mask account identifiers in emitted artifacts")
    parser.add_argument("--out-dir", default=None, help="override the output directory")
    return parser


def _effective_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.mask_handles:
        cfg.mask_handles = True
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    return cfg


def _run_synth(cfg: PipelineConfig) -> dict:
    s = cfg.synth
    spec = synthmod.SynthSpec(
        seed=cfg.seed,
        n_survey_users=s.n_survey_users,
        n_influencers=s.n_influencers,
        n_bystanders=s.n_bystanders,
        n_days=s.n_days,
        window_start=cfg.window.start,
        base_posts_per_day=s.base_posts_per_day,
        retweet_mean=s.retweet_mean,
        motif_excess=s.motif_excess,
        p_follow_in=s.p_follow_in,
        p_follow_out=s.p_follow_out,
        embed_dim=s.embed_dim,
        embed_delta=s.embed_delta,
        spike_plan=tuple((int(a), str(b), int(c)) for a, b, c in s.spike_plan),
    )
    manifest = synthmod.generate(spec, cfg.out_dir)
    return {"counts": manifest["counts"], "out_dir": cfg.out_dir}


def run(subcommand: str, cfg: PipelineConfig, dimension=None) -> dict:
    os.makedirs(cfg.out_dir, exist_ok=True)
    if subcommand == "synth":
        return _run_synth(cfg)

    need_embeddings = subcommand in ("select-candidates", "train", "classify", "report")
    if subcommand == "report":
        return stages.run_report(cfg)

    data = stages.load_pipeline_data(cfg, need_embeddings=need_embeddings)
    if subcommand == "ingest":
        return stages.stage_ingest(cfg, data)
    if subcommand == "influencers":
        return stages.stage_influencers(cfg, data)
    if subcommand == "select-candidates":
        dim = Dimension(dimension) if dimension else Dimension.IMP
        return stages.stage_candidates(cfg, data, dim)
    if subcommand == "train":
        return stages.stage_train(cfg, data, only=dimension)
    if subcommand == "classify":
        return stages.stage_classify(cfg, data, only=dimension)
    if subcommand == "dynamics":
        return stages.stage_dynamics(cfg, data, only=dimension)
    if subcommand == "audience":
        return stages.stage_audience(cfg, data, only=dimension)
    if subcommand == "flow":
        return stages.stage_flow(cfg, data, only=dimension)
    raise ValidationError(f"unknown subcommand {subcommand!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _effective_config(args)
        section = run(args.subcommand, cfg, dimension=args.dimension)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.subcommand != "report":
        print(json.dumps(section, sort_keys=True, indent=1, default=str))
    else:
        print(f"report written to {os.path.join(cfg.out_dir, 'report.json')}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
