"""Command-line interface: detect, synth, eval, compare, stress, bench."""

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import config as configmod
from . import dataio, evaluation, synthgen
from .errors import VanishKitError
from .features import load_features
from .linefit import load_segments
from .pipeline import detect_pipeline


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def _size(text):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 640x480, got {text!r}")


def _seed(args, fallback=0):
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("VANISHKIT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"VANISHKIT_SEED must be an integer, got {env!r}")
    return fallback


def _load_config(args):
    cfg = configmod.load(args.config) if getattr(args, "config", None) else configmod.PipelineConfig()
    cfg.seed = _seed(args, cfg.seed)
    return cfg.validate()


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------

def _job_list(target, input_mode):
    """``(image_id, kind, path, size)`` work items for a file or dataset directory."""
    if os.path.isfile(target):
        image_id = os.path.splitext(os.path.basename(target))[0]
        if target.lower().endswith(".csv"):
            return [(image_id, "features", target, None)]
        return [(image_id, "image", target, None)]
    if not os.path.isdir(target):
        raise FileNotFoundError(f"no such file or directory: {target}")
    jobs = []
    for name in sorted(os.listdir(target)):
        full = os.path.join(target, name)
        if os.path.isdir(full):
            feats = os.path.join(full, "features.csv")
            img = os.path.join(full, "image.png")
            size = None
            if os.path.isfile(os.path.join(full, "camera.json")):
                cam = synthgen.read_camera(full)
                size = (cam.width, cam.height)
            if input_mode != "image" and os.path.isfile(feats):
                jobs.append((name, "features", feats, size))
            elif input_mode != "features" and os.path.isfile(img):
                jobs.append((name, "image", img, size))
        elif name.lower().endswith(dataio.IMAGE_EXTS) and input_mode != "features":
            jobs.append((os.path.splitext(name)[0], "image", full, None))
    return jobs


def _run_job(job, cfg, features_path=None, segments_path=None, size=None):
    image_id, kind, path, job_size = job
    segments = load_segments(segments_path) if segments_path else None
    if kind == "image" and features_path is None:
        source = dataio.load_image(path)
        return detect_pipeline(source, cfg, image_id=image_id, segments=segments,
                               image_size=job_size)
    feats = load_features(features_path or path)
    img_size = job_size or size
    if kind == "image":
        img = dataio.load_image(path)
        img_size = img_size or (img.shape[1], img.shape[0])
        if segments is None and cfg.explicit_lines == "builtin":
            from .linefit import detect_segments
            segments = detect_segments(img, cfg.segments)
    return detect_pipeline(feats, cfg, image_id=image_id, segments=segments, image_size=img_size)


def _star_job(packed):
    return _run_job(*packed)


def cmd_detect(args):
    cfg = _load_config(args)
    jobs = _job_list(args.target, args.input)
    if not jobs:
        raise VanishKitError(f"nothing to detect in {args.target}")
    if (args.features or args.segments) and len(jobs) > 1:
        raise UsageError("--features/--segments apply to a single image only")
    if args.segments and cfg.explicit_lines == "builtin":
        cfg.explicit_lines = "file"
    packed = [(job, cfg, args.features, args.segments, args.size) for job in jobs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            outputs = list(ex.map(_star_job, packed))
    else:
        outputs = [_star_job(p) for p in packed]
    rows = [(o.image_id, o.vp) for o in outputs]
    if args.out:
        dataio.write_predictions(rows, args.out)
    else:
        dataio.write_predictions(rows, sys.stdout)
    if args.timing:
        for o in sorted(outputs, key=lambda o: o.image_id):
            stages = " ".join(f"{k}={v:.1f}" for k, v in o.stage_ms.items())
            print(f"{o.image_id}: total={o.runtime_ms:.1f}ms implicit={o.n_implicit} "
                  f"explicit={o.n_explicit} inliers={o.n_inliers} {stages}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args):
    seed = _seed(args)
    cfg = synthgen.RENDER_CONFIG if args.render else synthgen.SceneConfig()
    if args.clutter:
        cfg = synthgen.SceneConfig(**{**cfg.__dict__, "n_clutter": args.clutter})
    noise = synthgen.NoiseSpec(args.noise, args.size_jitter, args.descriptor_noise)
    os.makedirs(args.out, exist_ok=True)
    for inst in synthgen.make_dataset(args.scenes, seed=seed, noise=noise, config=cfg):
        synthgen.write_instance(inst, os.path.join(args.out, inst.image_id), render=args.render)
    print(f"wrote {args.scenes} scenes to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# eval / compare
# ---------------------------------------------------------------------------

def _records(pred_path, gt_dir, size):
    truths = dataio.find_ground_truth(gt_dir, size)
    if not truths:
        raise VanishKitError(f"no ground truth found in {gt_dir}")
    preds = dataio.read_predictions(pred_path)
    return evaluation.evaluate(preds, truths)


def _summary(records):
    c = evaluation.curve(records)
    return {"n": len(records), "failed": sum(r.failed for r in records),
            "median": evaluation.median_error(records),
            **{f"auc@{t}": evaluation.auc_at(c, t) for t in (2, 5, 10)}}, c


def cmd_eval(args):
    records = _records(args.pred, args.gt, args.size)
    s, c = _summary(records)
    print(f"images  {s['n']}")
    print(f"failed  {s['failed']}")
    print(f"median  {s['median']:.4f} deg")
    for t in (2, 5, 10):
        print(f"AUC@{t:<3d} {s[f'auc@{t}']:.4f}")
    if args.curve:
        evaluation.write_curve_csv(c, args.curve)
    if args.plot:
        evaluation.plot_curves_svg({os.path.basename(args.pred): c}, args.plot)
    if args.results:
        evaluation.write_results_csv(records, args.results)
    return 0


def cmd_compare(args):
    ra = _records(args.pred_a, args.gt, args.size)
    rb = _records(args.pred_b, args.gt, args.size)
    sa, ca = _summary(ra)
    sb, cb = _summary(rb)
    p_value = evaluation.significance(ra, rb)
    print(f"{'':10s} {'A':>10s} {'B':>10s}")
    for t in (2, 5, 10):
        print(f"{'AUC@' + str(t):10s} {sa[f'auc@{t}']:10.4f} {sb[f'auc@{t}']:10.4f}")
    print(f"{'median':10s} {sa['median']:10.4f} {sb['median']:10.4f}")
    print(f"{'failed':10s} {sa['failed']:10d} {sb['failed']:10d}")
    print(f"p-value    {p_value:.6g}")
    if args.plot:
        evaluation.plot_curves_svg({"A": ca, "B": cb}, args.plot)
    return 0


# ---------------------------------------------------------------------------
# stress / bench
# ---------------------------------------------------------------------------

def _load_dataset(directory):
    out = []
    for name in sorted(os.listdir(directory)):
        sub = os.path.join(directory, name)
        if not (os.path.isdir(sub) and os.path.isfile(os.path.join(sub, "features.csv"))):
            continue
        cam = synthgen.read_camera(sub)
        x, y = synthgen.read_gt(os.path.join(sub, "gt.txt"))
        out.append(synthgen.SyntheticInstance(features=load_features(os.path.join(sub, "features.csv")),
                                              gt_vp=np.array([x, y, 1.0]), camera=cam, scene=None,
                                              image_id=name))
    if not out:
        raise VanishKitError(f"no synthetic instances in {directory}")
    return out


def cmd_stress(args):
    cfg = _load_config(args)
    instances = _load_dataset(args.dataset)

    def detector(feats, size):
        return detect_pipeline(feats, cfg, image_size=size).vp_homogeneous()

    rows = evaluation.stress_test(detector, instances, sigmas=args.sigmas, scales=args.scales,
                                  thresholds=args.thresholds, seed=cfg.seed)
    if args.out:
        evaluation.write_stress_csv(rows, args.out)
    else:
        evaluation.write_stress_csv(rows, sys.stdout)
    return 0


def cmd_bench(args):
    cfg = _load_config(args)
    jobs = _job_list(args.dataset, args.input)
    if not jobs:
        raise VanishKitError(f"nothing to benchmark in {args.dataset}")
    _run_job(jobs[0], cfg)  # warm-up (JIT compilation, imports)
    times = []
    for job in jobs:
        t0 = time.perf_counter()
        _run_job(job, cfg)
        times.append((time.perf_counter() - t0) * 1e3)
    print(f"images        {len(times)}")
    print(f"median ms     {np.median(times):.2f}")
    print(f"mean ms       {np.mean(times):.2f}")
    print(f"max ms        {np.max(times):.2f}")
    return 0


def build_parser():
    p = _Parser(prog="vanishkit", description="Vanishing points from recurring patterns.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    d = sub.add_parser("detect", help="detect the VP of an image, feature file or dataset directory")
    d.add_argument("target")
    d.add_argument("--config")
    d.add_argument("--features", help="precomputed features CSV instead of extraction")
    d.add_argument("--segments", help="explicit line segments CSV")
    d.add_argument("--seed", type=int)
    d.add_argument("--out")
    d.add_argument("--size", type=_size, help="image size WxH for feature-only input")
    d.add_argument("--input", choices=["auto", "features", "image"], default="auto",
                   help="for dataset directories: prefer features.csv or image.png")
    d.add_argument("--jobs", type=int, default=1)
    d.add_argument("--timing", action="store_true", help="print stage timings to stderr")
    d.set_defaults(func=cmd_detect)

    s = sub.add_parser("synth", help="write synthetic instances")
    s.add_argument("--scenes", type=int, required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--noise", type=float, default=0.0, help="position noise sigma in pixels")
    s.add_argument("--size-jitter", type=float, default=0.0)
    s.add_argument("--descriptor-noise", type=float, default=0.0)
    s.add_argument("--clutter", type=int, default=0, help="random distractor features per scene")
    s.add_argument("--out", required=True)
    s.add_argument("--render", action="store_true", help="also write image.png")
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--curve")
    e.add_argument("--plot")
    e.add_argument("--results", help="per-image results CSV")
    e.add_argument("--size", type=_size)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", help="compare two prediction files")
    c.add_argument("--pred-a", required=True)
    c.add_argument("--pred-b", required=True)
    c.add_argument("--gt", required=True)
    c.add_argument("--plot")
    c.add_argument("--size", type=_size)
    c.set_defaults(func=cmd_compare)

    t = sub.add_parser("stress", help="F1 under feature-location noise")
    t.add_argument("--dataset", required=True)
    t.add_argument("--sigmas", type=_float_list, default=[0.5, 1.0, 2.0, 3.0, 5.0])
    t.add_argument("--scales", type=_float_list, default=[1.0])
    t.add_argument("--thresholds", type=_float_list, default=[5.0, 10.0])
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_stress)

    b = sub.add_parser("bench", help="median per-image detection time")
    b.add_argument("--dataset", required=True)
    b.add_argument("--config")
    b.add_argument("--seed", type=int)
    b.add_argument("--input", choices=["auto", "features", "image"], default="auto")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (VanishKitError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
