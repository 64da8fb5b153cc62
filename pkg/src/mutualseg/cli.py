"""Command-line front end: ``run``, ``evaluate`` and ``synth``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import cv2

from .core import MutualSegError
from .dataset_io import (
    DatasetError,
    FallbackInitializer,
    OutputWriter,
    disparity_filename,
    load_sequence,
    mask_filename,
    parse_manifest,
    read_correspondences,
    read_disparity,
    read_mask,
)
from .evaluation import (
    BOTH,
    PER_FRAME,
    POOLED,
    pool_registration,
    registration_metrics,
    registration_table,
    segmentation_metrics,
    segmentation_report,
    segmentation_table,
    to_csv,
    to_text,
)
from .flow import BlockFlowProvider, FileFlowProvider, ZeroFlowProvider
from .inference import MutualSegmenter, SolverConfig
from .segm_model import SegmParams
from .stereo_model import StereoParams
from .synth import SynthScenario, init_f1, write_sequence

log = logging.getLogger("mutualseg")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# flag name -> (section, field, type, help)
_PARAMS = {
    "lambda_u": ("stereo", "lambda_u", float, "uniqueness weight"),
    "lambda_s1": ("stereo", "lambda_s1", float, "stereo smoothness weight"),
    "w": ("stereo", "w", float, "uniqueness curve weight"),
    "truncation": ("stereo", "truncation", int, "disparity smoothness truncation"),
    "g": ("both", "g", float, "expected object contour gradient"),
    "lambda_c": ("segm", "lambda_c", float, "contour weight"),
    "lambda_s2": ("segm", "lambda_s2", float, "segmentation smoothness and temporal weight"),
    "lambda_m": ("segm", "lambda_m", float, "cross-view contribution weight"),
    "gmm_components": ("segm", "gmm_components", int, "mixture components per class"),
    "temporal_stride": ("segm", "temporal_stride", int, "temporal clique anchor stride"),
    "layers": ("segm", "layers", int, "temporal pipeline depth"),
    "contour_tau": ("segm", "contour_tau", float, "contour cost length scale (px)"),
    "contour_cap": ("segm", "contour_cap", float, "contour distance cap (px)"),
    "max_passes": ("solver", "max_disparity_passes", int, "maximum disparity passes per frame"),
    "max_moves": ("solver", "max_segmentation_moves", int, "maximum segmentation moves per frame"),
}
_DISABLE = {
    "appearance": ("stereo", "use_appearance"),
    "shape": ("stereo", "use_shape"),
    "saliency": ("stereo", "use_saliency"),
    "uniqueness": ("stereo", "use_uniqueness"),
    "color": ("segm", "use_color"),
    "contour": ("segm", "use_contour"),
    "cross-contour": ("segm", "use_cross_contour"),
    "temporal": ("segm", "use_temporal"),
}
_OTHER_KEYS = {"seed", "flow", "flow_pattern", "flow_view", "init", "init_view0", "init_view1", "deferred",
               "evaluate", "thresholds", "threads", "mode"}


class UsageError(Exception):
    pass


def _defaults() -> dict:
    sp, gp, sc = StereoParams(), SegmParams(), SolverConfig()
    out = {}
    for name, (section, fld, _, _) in _PARAMS.items():
        src = {"stereo": sp, "segm": gp, "both": sp, "solver": sc}[section]
        out[name] = getattr(src, fld)
    for name in _DISABLE:
        out["disable_" + name.replace("-", "_")] = False
    out.update(seed=0, flow="block", flow_pattern=None, flow_view=0, init="files", init_view0=None,
               init_view1=None, deferred=False, evaluate=False, thresholds="1,2,4", threads=None, mode=POOLED)
    return out


def _known_keys() -> set:
    return set(_PARAMS) | {"disable_" + n.replace("-", "_") for n in _DISABLE} | _OTHER_KEYS


def load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"{path}: cannot read config ({exc})") from exc
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = sorted(set(data) - _known_keys())
    if unknown:
        raise UsageError(f"{path}: unknown config keys: {', '.join(unknown)}")
    return data


def resolve_config(args: argparse.Namespace) -> dict:
    """Built-in defaults, overridden by the config file, overridden by explicit flags."""
    cfg = _defaults()
    if getattr(args, "config", None):
        cfg.update(load_config(args.config))
    for key in _known_keys():
        v = getattr(args, key, None)
        if v is not None and v is not False:
            cfg[key] = v
    return cfg


def build_params(cfg: dict) -> tuple[StereoParams, SegmParams, SolverConfig]:
    st, sg, so = {}, {}, {}
    for name, (section, fld, typ, _) in _PARAMS.items():
        val = typ(cfg[name])
        if section in ("stereo", "both"):
            st[fld] = val
        if section in ("segm", "both"):
            sg[fld] = val
        if section == "solver":
            so[fld] = val
    for name, (section, fld) in _DISABLE.items():
        disabled = bool(cfg["disable_" + name.replace("-", "_")])
        (st if section == "stereo" else sg)[fld] = not disabled
    so["seed"] = int(cfg["seed"])
    so["flow_view"] = int(cfg["flow_view"])
    try:
        return StereoParams(**st), SegmParams(**sg), SolverConfig(**so)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid parameters: {exc}") from exc


def parse_thresholds(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        vals = [float(v) for v in text]
    else:
        try:
            vals = [float(v) for v in str(text).split(",") if v.strip()]
        except ValueError as exc:
            raise UsageError(f"bad thresholds {text!r}") from exc
    if not vals or any(v < 0 for v in vals):
        raise UsageError(f"bad thresholds {text!r}")
    return tuple(vals)


def _flow_provider(cfg: dict):
    kind = cfg["flow"]
    if kind == "block":
        return BlockFlowProvider()
    if kind == "zero":
        return ZeroFlowProvider()
    if kind == "files":
        if not cfg.get("flow_pattern"):
            raise UsageError("--flow files needs --flow-pattern")
        return FileFlowProvider(cfg["flow_pattern"])
    raise UsageError(f"unknown flow provider {kind!r}")


# ---------------------------------------------------------------------------
# run


def cmd_run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    stereo, segm, solver = build_params(cfg)
    thresholds = parse_thresholds(cfg["thresholds"])
    flow = _flow_provider(cfg)
    if cfg["threads"]:
        cv2.setNumThreads(int(cfg["threads"]))
    sources = [cfg["init_view0"] or cfg["init"], cfg["init_view1"] or cfg["init"]]
    for s in sources:
        if s not in ("files", "fallback", "none"):
            raise UsageError(f"unknown init source {s!r}")
    out_dir = Path(args.out)
    try:
        manifest = parse_manifest(args.manifest)
        writer = OutputWriter(out_dir)
        deferred_writer = OutputWriter(out_dir / "deferred") if cfg["deferred"] else None
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    engine = MutualSegmenter(manifest.d_max, stereo, segm, solver, flow)
    fallbacks = [FallbackInitializer(), FallbackInitializer()]
    log_path = out_dir / "run_log.jsonl"
    status = EXIT_OK
    with log_path.open("w") as log_fh:
        try:
            for item in load_sequence(manifest):
                t = item.pair.frame_index
                init = []
                for k in (0, 1):
                    fb = fallbacks[k](item.pair.images[k])
                    if sources[k] == "files":
                        if item.init_masks[k] is None:
                            raise DatasetError(f"frame {t}: no initialization mask for view {k}")
                        init.append(item.init_masks[k])
                    elif sources[k] == "fallback":
                        init.append(fb)
                    else:
                        init.append(None)
                start = time.perf_counter()
                res = engine.advance(item.pair, init)
                elapsed = time.perf_counter() - start
                writer.write(t, res.realtime.masks, res.realtime.disparities)
                if deferred_writer is not None:
                    for d in res.deferred:
                        deferred_writer.write(d.frame_index, d.masks, d.disparities)
                s = res.stats
                record = {
                    "frame": t,
                    "stereo_energy": res.stereo_energy,
                    "segm_energy": res.segm_energy,
                    "disparity_passes": s.disparity_passes,
                    "disparity_moves_accepted": s.disparity_moves_accepted,
                    "segmentation_moves": s.segmentation_moves,
                    "segmentation_moves_accepted": s.segmentation_moves_accepted,
                    "converged": s.converged,
                    "bound_hit": s.bound_hit,
                    "degenerate": s.degenerate,
                }
                log_fh.write(json.dumps(record, sort_keys=True) + "\n")
                log_fh.flush()
                print(f"frame {t}: {elapsed:.1f}s passes={s.disparity_passes} "
                      f"segm_moves={s.segmentation_moves} accepted={s.segmentation_moves_accepted} "
                      f"{'converged' if s.converged else 'bound-hit'}")
                for k in (0, 1):
                    e1, e2 = res.stereo_energy[k], res.segm_energy[k]
                    print(f"  view{k} stereo " + " ".join(f"{n}={v:.3f}" for n, v in e1.items())
                          + " | segm " + " ".join(f"{n}={v:.3f}" for n, v in e2.items()))
            if deferred_writer is not None:
                for d in engine.finish():
                    deferred_writer.write(d.frame_index, d.masks, d.disparities)
        except (MutualSegError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            status = EXIT_FAIL
    if status == EXIT_OK and cfg["evaluate"]:
        status = evaluate_dir(out_dir, manifest, thresholds, cfg["mode"], out_dir)
    return status


# ---------------------------------------------------------------------------
# evaluate


def evaluate_dir(pred_dir: Path, manifest, thresholds, mode: str, report_dir: Path) -> int:
    pred_dir = Path(pred_dir)
    per_frame, disparities, missing = {}, {}, []
    for t in manifest.frame_indices():
        for k in (0, 1):
            pat = manifest.gt_patterns[k]
            if pat is None or not manifest.path(pat, t).exists():
                continue
            mp = pred_dir / mask_filename(k, t)
            if not mp.exists():
                missing.append(str(mp))
                continue
            per_frame[(t, k)] = segmentation_metrics(read_mask(mp, t), read_mask(manifest.path(pat, t), t))
    corr = []
    if manifest.correspondences:
        corr = read_correspondences(manifest.root / manifest.correspondences)
        for key in sorted({(c.frame, c.view) for c in corr}):
            dp = pred_dir / disparity_filename(key[1], key[0])
            if not dp.exists():
                missing.append(str(dp))
                continue
            disparities[key] = read_disparity(dp)
    if missing:
        print("error: missing predictions:", file=sys.stderr)
        for m in sorted(set(missing)):
            print(f"  {m}", file=sys.stderr)
        return EXIT_FAIL
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    if per_frame:
        header, body = segmentation_table(segmentation_report(per_frame, mode))
        (report_dir / "segmentation.csv").write_text(to_csv(header, body))
        text = to_text(header, body)
        (report_dir / "segmentation.txt").write_text(text)
        print(text, end="")
    if corr:
        groups = {}
        per_view = {}
        for k in (0, 1):
            sub = [c for c in corr if c.view == k]
            if sub:
                per_view[f"view{k}"] = registration_metrics(disparities, sub, thresholds)
        groups.update(per_view)
        groups["overall"] = pool_registration(list(per_view.values()))
        header, body = registration_table(groups)
        (report_dir / "registration.csv").write_text(to_csv(header, body))
        text = to_text(header, body)
        (report_dir / "registration.txt").write_text(text)
        print(text, end="")
    if not per_frame and not corr:
        print("error: the manifest lists no ground truth", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    thresholds = parse_thresholds(args.thresholds)
    try:
        manifest = parse_manifest(args.manifest)
        return evaluate_dir(Path(args.pred_dir), manifest, thresholds, args.mode, Path(args.out or args.pred_dir))
    except MutualSegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        sc = SynthScenario(
            width=args.width, height=args.height, frames=args.frames, d_star=args.d_star,
            bg_disparity=args.bg_disparity, d_max=args.d_max, noise=args.noise, corruption=args.corruption,
            invert=not args.no_invert, flat_region=not args.no_flat, flat_view=args.flat_view,
            flat_level=args.flat_level, drop_flat_from_init=args.drop_flat_from_init, seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    path, frames = write_sequence(sc, args.out)
    for t, (a, b) in enumerate(init_f1(frames)):
        print(f"frame {t}: init F1 view0={a:.3f} view1={b:.3f}")
    print(f"manifest: {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mutualseg", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="segment and register a sequence")
    run.add_argument("manifest")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--config", help="JSON file of parameter overrides")
    d = _defaults()
    for name, (_, _, typ, helptext) in _PARAMS.items():
        run.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None,
                         help=f"{helptext} (default {d[name]})")
    for name in _DISABLE:
        run.add_argument(f"--disable-{name}", dest="disable_" + name.replace("-", "_"), action="store_true",
                         default=None, help=f"drop the {name} term")
    run.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    run.add_argument("--flow", choices=["block", "zero", "files"], default=None, help="flow provider (default block)")
    run.add_argument("--flow-pattern", dest="flow_pattern", default=None,
                     help="flow file pattern with {frame}, for --flow files")
    run.add_argument("--flow-view", dest="flow_view", type=int, choices=[0, 1], default=None,
                     help="view the flow is computed on (default 0)")
    run.add_argument("--init", choices=["files", "fallback", "none"], default=None,
                     help="initial mask source for both views (default files)")
    run.add_argument("--init-view0", dest="init_view0", choices=["files", "fallback", "none"], default=None)
    run.add_argument("--init-view1", dest="init_view1", choices=["files", "fallback", "none"], default=None)
    run.add_argument("--deferred", action="store_true", default=None, help="also write deferred outputs")
    run.add_argument("--evaluate", action="store_true", default=None, help="score outputs against ground truth")
    run.add_argument("--thresholds", default=None, help="disparity error thresholds (default 1,2,4)")
    run.add_argument("--mode", choices=[POOLED, PER_FRAME, BOTH], default=None, help="score aggregation")
    run.add_argument("--threads", type=int, default=None, help="bound internal parallelism")
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("evaluate", help="score predictions against ground truth")
    ev.add_argument("pred_dir")
    ev.add_argument("manifest")
    ev.add_argument("--out", default=None, help="report directory (default: pred_dir)")
    ev.add_argument("--thresholds", default="1,2,4")
    ev.add_argument("--mode", choices=[POOLED, PER_FRAME, BOTH], default=POOLED)
    ev.set_defaults(func=cmd_evaluate)

    sy = sub.add_parser("synth", help="write a synthetic sequence with ground truth")
    sy.add_argument("out")
    defaults = SynthScenario()
    sy.add_argument("--width", type=int, default=defaults.width)
    sy.add_argument("--height", type=int, default=defaults.height)
    sy.add_argument("--frames", type=int, default=defaults.frames)
    sy.add_argument("--d-star", dest="d_star", type=int, default=defaults.d_star)
    sy.add_argument("--bg-disparity", dest="bg_disparity", type=int, default=defaults.bg_disparity)
    sy.add_argument("--d-max", dest="d_max", type=int, default=defaults.d_max)
    sy.add_argument("--noise", type=float, default=defaults.noise)
    sy.add_argument("--corruption", type=float, default=defaults.corruption)
    sy.add_argument("--no-invert", action="store_true")
    sy.add_argument("--no-flat", action="store_true", help="skip the flattened-contrast region")
    sy.add_argument("--flat-view", dest="flat_view", type=int, choices=[0, 1], default=defaults.flat_view)
    sy.add_argument("--flat-level", dest="flat_level", type=float, default=defaults.flat_level)
    sy.add_argument("--drop-flat-from-init", action="store_true")
    sy.add_argument("--seed", type=int, default=0)
    sy.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
