"""Command-line entry points: generate, edit, eval, serve, sweep.

Exit codes: 0 on success, 1 on user error (with usage text), 2 on runtime
failure. Flag values override config-file values, which override defaults;
``--dry-run`` prints the resolved effective config without loading models.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import yaml

from .backbones import DEFAULT_EDITING_BACKBONE, DEFAULT_GENERATION_BACKBONE, backbone_ids
from .config import (
    InversionConfig,
    OptimizationConfig,
    apply_overrides,
    config_hash,
    config_to_dict,
    optimization_config_from_dict,
)
from .errors import SubjectTuneError
from .evaluation import EvalBackends, run_benchmark
from .extractors import flatten_stub, get_extractor
from .imaging import load_mask_png, load_png, save_png
from .subject import ReferenceSubject
from .workflows import EditJob, GenerationJob, run_edit, run_generation, seed_sweep


class CliUserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: A003 - argparse API
        raise CliUserError(message)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("optimization config")
    group.add_argument("--seed", type=int)
    group.add_argument("--learning-rate", type=float)
    group.add_argument("--weight-dino", type=float)
    group.add_argument("--weight-ir", type=float)
    group.add_argument("--weight-bg", type=float)
    group.add_argument("--max-iterations", type=int)
    group.add_argument("--early-stop-percent", type=float)
    group.add_argument("--early-stop-window", type=int)
    group.add_argument("--truncation-depth", type=int)
    group.add_argument("--denoise-steps", type=int)
    group.add_argument("--resolution", type=str, help="HxW, e.g. 512x512")
    group.add_argument("--rank", type=int)
    group.add_argument("--target-layer", action="append", dest="target_layers")
    group.add_argument("--optimizer", choices=["adam", "sgd"])
    group.add_argument("--frame-stride", type=int)


def _config_overrides(args: argparse.Namespace) -> dict:
    resolution = None
    if args.resolution:
        try:
            h, w = args.resolution.lower().split("x")
            resolution = (int(h), int(w))
        except ValueError as exc:
            raise CliUserError(f"--resolution expects HxW, got {args.resolution!r}") from exc
    return {
        "seed": args.seed,
        "learning_rate": args.learning_rate,
        "loss_weights.dino": args.weight_dino,
        "loss_weights.ir": args.weight_ir,
        "loss_weights.background": args.weight_bg,
        "max_iterations": args.max_iterations,
        "early_stop.min_improvement_pct": args.early_stop_percent,
        "early_stop.window": args.early_stop_window,
        "truncation_depth": args.truncation_depth,
        "denoise_steps": args.denoise_steps,
        "resolution": resolution,
        "rank": args.rank,
        "target_layers": tuple(args.target_layers) if args.target_layers else None,
        "optimizer": args.optimizer,
        "frame_stride": args.frame_stride,
    }


def _load_job_file(path: str | None) -> dict:
    if not path:
        return {}
    file_path = Path(path)
    if not file_path.exists():
        raise CliUserError(f"config file {path} does not exist")
    with open(file_path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise CliUserError(f"config file {path} must hold a mapping")
    return data


def _resolve_config(args: argparse.Namespace, job_file: dict) -> OptimizationConfig:
    base = optimization_config_from_dict(job_file.get("config", {}))
    return apply_overrides(base, _config_overrides(args))


def _pick(args_value, file_value, default):
    if args_value is not None:
        return args_value
    if file_value is not None:
        return file_value
    return default


def _resolve_extractors(spec, resolution: tuple[int, int]):
    if spec in (None, "stub"):
        return (flatten_stub("cli-stub-a", resolution), flatten_stub("cli-stub-b", resolution))
    if isinstance(spec, str):
        spec = [s.strip() for s in spec.split(",")]
    if len(spec) != 2:
        raise CliUserError("--extractors expects 'stub' or two comma-separated registry names")
    return tuple(get_extractor(name) for name in spec)


def _session_dir(args, task: str, cfg_hash: str) -> Path:
    workdir = Path(args.workdir)
    if args.out:
        return workdir / args.out
    return workdir / "sessions" / f"{task}-{cfg_hash}"


def _dry_run_payload(task: str, job_dict: dict, config: OptimizationConfig) -> str:
    payload = {
        "task": task,
        "effective_config": config_to_dict(config),
        "config_hash": config_hash(config),
        **job_dict,
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def _cmd_generate(args) -> int:
    job_file = _load_job_file(args.config)
    config = _resolve_config(args, job_file)
    subject_path = _pick(args.subject, job_file.get("subject"), None)
    if not subject_path:
        raise CliUserError("--subject is required (or 'subject' in the config file)")
    class_label = _pick(args.class_label, job_file.get("class_label"), "subject")
    prompts = args.prompt or job_file.get("prompts") or []
    backbone_id = _pick(args.backbone, job_file.get("backbone"), DEFAULT_GENERATION_BACKBONE)
    simple_prompt = _pick(args.simple_prompt, job_file.get("simple_prompt"), None)
    simplify = not args.no_prompt_simplification if args.no_prompt_simplification else job_file.get(
        "simplify_prompt", True
    )
    if not prompts:
        prompts = [f"image of a {class_label}"]

    cfg_hash = config_hash(config)
    if args.dry_run:
        print(
            _dry_run_payload(
                "generate",
                {
                    "subject": str(subject_path),
                    "class_label": class_label,
                    "prompts": prompts,
                    "backbone": backbone_id,
                    "simplify_prompt": simplify,
                },
                config,
            )
        )
        return 0

    subject = ReferenceSubject.from_file(Path(args.workdir) / subject_path, class_label)
    job = GenerationJob(
        subject=subject,
        target_prompts=list(prompts),
        simple_prompt=simple_prompt,
        config=config,
        backbone_id=backbone_id,
        simplify_prompt=simplify,
    )
    from .backbones import load_backbone

    backbone = load_backbone(backbone_id)
    extractors = _resolve_extractors(
        _pick(args.extractors, job_file.get("extractors"), None), backbone.handle.resolution
    )
    session_dir = _session_dir(args, "generate", cfg_hash)
    result = run_generation(job, backbone=backbone, extractors=extractors, session_dir=session_dir)
    print(f"session: {session_dir}")
    print(f"config hash: {cfg_hash}")
    print(
        f"stopped: {result.run.decision.reason.value} at step {result.run.decision.stop_index}, "
        f"best loss {result.run.best_loss:.6f} (frame {result.run.best_index})"
    )
    for prompt, error in result.render_errors.items():
        print(f"render failed for {prompt!r}: {error}", file=sys.stderr)
    return 0


def _cmd_edit(args) -> int:
    job_file = _load_job_file(args.config)
    config = _resolve_config(args, job_file)
    subject_path = _pick(args.subject, job_file.get("subject"), None)
    input_path = _pick(args.input, job_file.get("input"), None)
    if not subject_path or not input_path:
        raise CliUserError("edit requires --subject and --input")
    class_label = _pick(args.class_label, job_file.get("class_label"), "subject")
    backbone_id = _pick(args.backbone, job_file.get("backbone"), DEFAULT_EDITING_BACKBONE)
    mask_source = _pick(args.mask_source, job_file.get("mask_source"), "auto")
    strength = _pick(args.inversion_strength, job_file.get("inversion", {}).get("strength"), 0.75)
    renoise = _pick(
        args.renoise_iterations, job_file.get("inversion", {}).get("renoise_iterations"), 5
    )
    inversion = InversionConfig(strength=strength, renoise_iterations=renoise)

    cfg_hash = config_hash(config)
    if args.dry_run:
        print(
            _dry_run_payload(
                "edit",
                {
                    "subject": str(subject_path),
                    "input": str(input_path),
                    "class_label": class_label,
                    "backbone": backbone_id,
                    "mask_source": mask_source,
                    "inversion": config_to_dict(inversion),
                },
                config,
            )
        )
        return 0

    workdir = Path(args.workdir)
    subject = ReferenceSubject.from_file(workdir / subject_path, class_label)
    user_mask = load_mask_png(workdir / args.mask) if args.mask else None
    job = EditJob(
        input_image=load_png(workdir / input_path),
        subject=subject,
        config=config,
        backbone_id=backbone_id,
        inversion=inversion,
        mask_source=mask_source,
        user_mask=user_mask,
    )
    from .backbones import load_backbone

    backbone = load_backbone(backbone_id)
    extractors = _resolve_extractors(
        _pick(args.extractors, job_file.get("extractors"), None), backbone.handle.resolution
    )
    session_dir = _session_dir(args, "edit", cfg_hash)
    result = run_edit(job, backbone=backbone, extractors=extractors, session_dir=session_dir)
    print(f"session: {session_dir}")
    print(f"config hash: {cfg_hash}")
    print(
        f"stopped: {result.run.decision.reason.value} at step {result.run.decision.stop_index}, "
        f"best loss {result.run.best_loss:.6f} (frame {result.run.best_index})"
    )
    return 0


def _cmd_sweep(args) -> int:
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip() != ""]
    except ValueError as exc:
        raise CliUserError(f"--seeds expects comma-separated ints, got {args.seeds!r}") from exc
    if not seeds:
        raise CliUserError("--seeds must name at least one seed")

    job_file = _load_job_file(args.config)
    config = _resolve_config(args, job_file)
    subject_path = _pick(args.subject, job_file.get("subject"), None)
    if not subject_path:
        raise CliUserError("--subject is required")
    class_label = _pick(args.class_label, job_file.get("class_label"), "subject")
    backbone_id = _pick(args.backbone, job_file.get("backbone"), DEFAULT_GENERATION_BACKBONE)
    prompts = args.prompt or job_file.get("prompts") or [f"image of a {class_label}"]

    cfg_hash = config_hash(config)
    if args.dry_run:
        print(
            _dry_run_payload(
                "sweep",
                {
                    "subject": str(subject_path),
                    "seeds": seeds,
                    "backbone": backbone_id,
                    "prompts": prompts,
                },
                config,
            )
        )
        return 0

    subject = ReferenceSubject.from_file(Path(args.workdir) / subject_path, class_label)
    job = GenerationJob(
        subject=subject,
        target_prompts=list(prompts),
        config=config,
        backbone_id=backbone_id,
    )
    from .backbones import load_backbone

    backbone = load_backbone(backbone_id)
    extractors = _resolve_extractors(
        _pick(args.extractors, job_file.get("extractors"), None), backbone.handle.resolution
    )
    sweep_root = _session_dir(args, "sweep", cfg_hash)
    results, errors, grid = seed_sweep(
        job,
        seeds,
        workers=args.workers,
        session_root=sweep_root,
        backbone=backbone,
        extractors=extractors,
    )
    if grid is not None:
        save_png(sweep_root / "grid.png", grid)
    print(f"sweep root: {sweep_root}")
    print(f"succeeded: {sorted(results)}")
    for seed, message in errors.items():
        print(f"seed {seed} failed: {message}", file=sys.stderr)
    return 0 if not errors else 2


def _cmd_eval(args) -> int:
    if args.backends == "stub":
        backends = EvalBackends.stubs()
    else:
        backends = EvalBackends.from_registry()
    output_dir = Path(args.workdir) / (args.output or "eval-report")
    report, _records = run_benchmark(
        Path(args.workdir) / args.manifest,
        backends=backends,
        output_dir=output_dir,
        mode=args.mode,
    )
    print(report.render_table())
    print(f"report written to {output_dir}")
    return 0


def _cmd_serve(args) -> int:  # pragma: no cover - long-running server
    import uvicorn

    from .service import ServiceSettings, create_app

    settings = ServiceSettings.from_env()
    if args.session_root:
        settings.session_root = Path(args.workdir) / args.session_root
    if args.host:
        settings.host = args.host
    if args.port:
        settings.port = args.port
    if args.workers:
        settings.workers = args.workers
    uvicorn.run(create_app(settings), host=settings.host, port=settings.port)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="subjecttune", description=__doc__)
    parser.add_argument("--workdir", default=".", help="base directory for relative paths")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="job spec file (YAML or JSON)")
    common.add_argument("--backbone", choices=backbone_ids())
    common.add_argument("--extractors", help="'stub' or two comma-separated registry names")
    common.add_argument("--out", help="session directory (relative to workdir)")
    common.add_argument("--dry-run", action="store_true", help="print the effective config and exit")

    gen = sub.add_parser("generate", parents=[common], help="subject-driven generation")
    gen.add_argument("--subject", help="reference subject image (PNG)")
    gen.add_argument("--class", dest="class_label", help="subject class label")
    gen.add_argument("--prompt", action="append", help="target prompt (repeatable)")
    gen.add_argument("--simple-prompt", help="override the stage-1 optimization prompt")
    gen.add_argument(
        "--no-prompt-simplification",
        action="store_true",
        help="optimize directly on the (single) target prompt",
    )
    _add_config_flags(gen)
    gen.set_defaults(func=_cmd_generate)

    edit = sub.add_parser("edit", parents=[common], help="subject-driven editing")
    edit.add_argument("--subject", help="reference subject image (PNG)")
    edit.add_argument("--input", help="image whose subject is replaced")
    edit.add_argument("--class", dest="class_label")
    edit.add_argument("--mask-source", choices=["auto", "user", "box", "none"])
    edit.add_argument("--mask", help="user-supplied mask PNG (nonzero = subject)")
    edit.add_argument("--inversion-strength", type=float)
    edit.add_argument("--renoise-iterations", type=int)
    _add_config_flags(edit)
    edit.set_defaults(func=_cmd_edit)

    sweep = sub.add_parser("sweep", parents=[common], help="per-seed generation sweep")
    sweep.add_argument("--subject")
    sweep.add_argument("--class", dest="class_label")
    sweep.add_argument("--prompt", action="append")
    sweep.add_argument("--seeds", required=True, help="comma-separated seed list")
    sweep.add_argument("--workers", type=int, default=1)
    _add_config_flags(sweep)
    sweep.set_defaults(func=_cmd_sweep)

    ev = sub.add_parser("eval", help="score model outputs against a manifest")
    ev.add_argument("--manifest", required=True, help="line-delimited JSON manifest")
    ev.add_argument("--output", help="report directory")
    ev.add_argument("--mode", choices=["generation", "editing"], default="generation")
    ev.add_argument("--backends", choices=["stub", "registry"], default="registry")
    ev.set_defaults(func=_cmd_eval)

    serve = sub.add_parser("serve", help="run the session service")
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)
    serve.add_argument("--session-root")
    serve.add_argument("--workers", type=int)
    serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliUserError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except CliUserError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SubjectTuneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failure boundary
        print(f"unexpected failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
