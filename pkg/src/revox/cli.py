"""Command-line pipelines over the library. Every subcommand is a pure
function of (inputs, flags, seed) down to the output bytes; all files are
written atomically (temp + rename)."""

import argparse
import json
import os
import sys

import numpy as np

from . import analysis, encoder, formats, multires, pointcloud, walk
from .grid import GridConfig, partition

# Partition presets: pillar-style 2D cells and fine 3D voxels.
PRESETS = {
    "pillars": {"voxel_size": (0.25, 0.25), "max_points": 25, "max_voxels": 25000,
                "feature_mode": "pillars"},
    "second": {"voxel_size": (0.05, 0.05, 0.1), "max_points": 4, "max_voxels": 30000,
               "feature_mode": "second"},
}


def _add_grid_flags(p):
    p.add_argument("--preset", choices=sorted(PRESETS), default="pillars",
                   help="partition defaults: pillars (0.25x0.25 cells, 25 points, "
                        "25000 voxels) or second (0.05x0.05x0.1, 4 points, 30000)")
    p.add_argument("--pillar-size", type=float, nargs=2, metavar=("L", "W"),
                   help="2D cell size in meters (overrides the preset)")
    p.add_argument("--voxel-size", type=float, nargs=3, metavar=("L", "W", "H"),
                   help="3D cell size in meters (overrides the preset)")
    p.add_argument("--range", type=float, nargs=6, default=[-50.0, 50.0, -50.0, 50.0, -3.0, 1.0],
                   metavar=("XMIN", "XMAX", "YMIN", "YMAX", "ZMIN", "ZMAX"),
                   help="detection range per axis")
    p.add_argument("--max-points", type=int, default=None,
                   help="per-voxel point cap (preset default)")
    p.add_argument("--max-voxels", type=int, default=None,
                   help="voxel cap (preset default)")
    p.add_argument("--connectivity", type=int, choices=(4, 6), default=4,
                   help="neighbor slots: 4 (X-Y) or 6 (3D, voxel mode only)")
    p.add_argument("--count-mode", choices=("standard", "quarter-adjusted"),
                   default=None,
                   help="walk sizing: raw counts, or counts/4 rounded up "
                        "(default: quarter-adjusted for pillars, standard for second)")


def _add_common(p, threads=False):
    p.add_argument("--seed", type=int, default=0, help="deterministic run seed")
    if threads:
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: REVOX_THREADS or 1)")


def _grid_config(args):
    preset = PRESETS[args.preset]
    if args.pillar_size and args.voxel_size:
        raise SystemExit("revox: error: --pillar-size and --voxel-size conflict")
    size = tuple(args.pillar_size or args.voxel_size or preset["voxel_size"])
    r = args.range
    count_mode = args.count_mode
    if count_mode is None:
        count_mode = "quarter-adjusted" if len(size) == 2 else "standard"
    return GridConfig(
        voxel_size=size,
        x_range=(r[0], r[1]),
        y_range=(r[2], r[3]),
        z_range=(r[4], r[5]),
        max_points_per_voxel=args.max_points or preset["max_points"],
        max_voxels=args.max_voxels or preset["max_voxels"],
        connectivity=args.connectivity,
        count_mode=count_mode,
    )


def _threads(args):
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get("REVOX_THREADS")
    return max(1, int(env)) if env else None


def _load_cloud(path):
    if path.endswith(".csv"):
        return pointcloud.load_csv(path)
    return pointcloud.load_kitti_bin(path, with_timestamp=path.endswith(".bin5"))


def _write_meta(args, out_path, extra=None):
    if not getattr(args, "meta", None):
        return
    meta = {"seed": getattr(args, "seed", 0), "output": os.path.basename(out_path)}
    if extra:
        meta.update(extra)
    body = json.dumps(meta, sort_keys=True, indent=2) + "\n"
    formats.atomic_write(args.meta, body.encode())


def _cmd_synth(args):
    blobs = tuple(
        pointcloud.Blob(center=tuple(b[0:3]), extent=tuple(b[3:6]), density=int(b[6]))
        for b in (args.blob or [])
    )
    spec = pointcloud.SynthSpec(
        ring_count=args.rings,
        points_per_ring=args.points_per_ring,
        max_range=args.max_range,
        height_band=tuple(args.height_band),
        dropout=args.dropout,
        object_blobs=blobs,
    )
    cloud = pointcloud.generate_synthetic(spec, args.seed)
    if args.out.endswith(".csv"):
        pointcloud.save_csv(cloud, args.out)
    else:
        pointcloud.save_bin(cloud, args.out, with_timestamp=args.out.endswith(".bin5"))
    print(f"points {len(cloud)} count")
    print(f"seed {args.seed} -")
    _write_meta(args, args.out, {"points": len(cloud)})
    return 0


def _cmd_voxelize(args):
    cloud = _load_cloud(args.input)
    grid, _ = partition(cloud, _grid_config(args))
    formats.write_rvox1(grid, args.out)
    print(f"voxels {len(grid)} count")
    print(f"seed {args.seed} -")
    _write_meta(args, args.out, {"voxels": len(grid)})
    return 0


def _cmd_reconfigure(args):
    cloud = _load_cloud(args.input)
    config = _grid_config(args)
    if config.connectivity != 4:
        raise SystemExit("revox: error: walk dumps require 4-slot adjacency")
    grid, graph = partition(cloud, config)
    reconfig = walk.reconfigure(grid, graph, seed=args.seed, threads=_threads(args))
    formats.write_rwlk1(reconfig, args.out)
    if args.grid_out:
        formats.write_rvox1(grid, args.grid_out)
    print(f"voxels {len(grid)} count")
    print(f"seed {args.seed} -")
    _write_meta(args, args.out, {"voxels": len(grid)})
    return 0


def _cmd_multires(args):
    cloud = _load_cloud(args.input)
    config = _grid_config(args)
    if config.connectivity != 4:
        raise SystemExit("revox: error: walk dumps require 4-slot adjacency")
    mgrid = multires.partition_multires(cloud, config, seed=args.seed)
    reconfig = multires.reconfigure_multires(mgrid, seed=args.seed,
                                             threads=_threads(args))
    formats.write_rwlk2(reconfig, mgrid.coarse, args.out)
    if args.grid_out:
        formats.write_rvox1(mgrid.fine, args.grid_out)
    print(f"fine_voxels {len(mgrid.fine)} count")
    print(f"coarse_voxels {len(mgrid.coarse)} count")
    print(f"seed {args.seed} -")
    _write_meta(args, args.out, {"voxels": len(mgrid.fine)})
    return 0


def _cmd_encode(args):
    cloud = _load_cloud(args.input)
    config = _grid_config(args)
    if config.connectivity != 4:
        raise SystemExit("revox: error: walk dumps require 4-slot adjacency")
    spec = encoder.FeatureSpec(args.mode or PRESETS[args.preset]["feature_mode"])
    threads = _threads(args)
    if args.multires:
        mgrid = multires.partition_multires(cloud, config, seed=args.seed)
        reconfig = multires.reconfigure_multires(mgrid, seed=args.seed, threads=threads)
        grid = mgrid.fine
        blocks = encoder.decorate(grid, reconfig, cloud, spec, mgrid=mgrid)
        if args.walk_out:
            formats.write_rwlk2(reconfig, mgrid.coarse, args.walk_out)
    else:
        grid, graph = partition(cloud, config)
        mgrid = None
        reconfig = walk.reconfigure(grid, graph, seed=args.seed, threads=threads)
        blocks = encoder.decorate(grid, reconfig, cloud, spec)
        if args.walk_out:
            formats.write_rwlk1(reconfig, args.walk_out)
    if args.encoder == "avg":
        feats = [encoder.encode_avg(b) for b in blocks]
    else:
        feats = [encoder.encode_weighted(b) for b in blocks]
    if args.out.endswith(".csv"):
        formats.write_feature_csv(feats, args.out)
    else:
        formats.write_rfea1(feats, args.out)
    if args.grid_out:
        formats.write_rvox1(grid, args.grid_out)
    print(f"voxels {len(grid)} count")
    print(f"width {len(feats[0].vector) if feats else 0} count")
    print(f"seed {args.seed} -")
    _write_meta(args, args.out, {"voxels": len(grid)})
    return 0


def _raw_effective_counts(raw_grid, raw_walks):
    counts = raw_grid.counts.astype(np.float64)
    finals = raw_walks.finals
    present = finals >= 0
    safe = np.clip(finals, 0, None)
    nb = counts[safe]
    if raw_walks.coarse is not None:
        ccounts = raw_walks.coarse.counts.astype(np.float64)
        coarse = present & (raw_walks.tags == 1)
        nb = np.where(coarse, ccounts[np.clip(safe, 0, max(len(ccounts) - 1, 0))], nb)
    nb = np.where(present, nb, 0.0)
    return (counts + nb.sum(axis=1)) / (1.0 + present.sum(axis=1))


def _cmd_stats(args):
    raw_grid = formats.read_rvox1(args.before)
    cov_before = analysis.coefficient_of_variation(raw_grid.counts)
    lines = [("cov_before", cov_before, "ratio")]
    summary = {"seed": args.seed, "cov_before": cov_before}
    if args.after:
        try:
            raw_walks = formats.read_rwlk1(args.after)
        except ValueError:
            raw_walks = formats.read_rwlk2(args.after)
        eff = _raw_effective_counts(raw_grid, raw_walks)
        cov_after = analysis.coefficient_of_variation(eff)
        # start -> final displacement, fine cell units
        startsstats = []
        cells = raw_grid.cells.astype(np.float64)
        disps = []
        for v in range(len(raw_walks)):
            for k in range(4):
                trace = raw_walks.trace_of(v, k)
                if len(trace) == 0:
                    continue
                start = cells[trace[0]] + 0.5
                fid = raw_walks.finals[v, k]
                if raw_walks.coarse is not None and raw_walks.tags[v, k] == 1:
                    fc = raw_walks.coarse.cells[fid].astype(np.float64)
                    end = np.array([2 * fc[0] + 1.0, 2 * fc[1] + 1.0, fc[2] + 0.5])
                else:
                    end = cells[fid] + 0.5
                disps.append(float(np.linalg.norm(end - start)))
        disps = np.asarray(disps) if disps else np.zeros(1)
        lines += [
            ("cov_after", cov_after, "ratio"),
            ("displacement_mean", float(disps.mean()), "cells"),
            ("displacement_p50", float(np.percentile(disps, 50)), "cells"),
            ("displacement_p95", float(np.percentile(disps, 95)), "cells"),
        ]
        summary.update(
            cov_after=cov_after,
            displacement_mean=float(disps.mean()),
            displacement_p50=float(np.percentile(disps, 50)),
            displacement_p95=float(np.percentile(disps, 95)),
        )
        if args.hist_out:
            hist = analysis.count_histogram(eff)
            analysis.write_histogram_csv(hist, args.hist_out)
    elif args.hist_out:
        hist = analysis.count_histogram(raw_grid.counts)
        analysis.write_histogram_csv(hist, args.hist_out)
    for name, value, unit in lines:
        print(f"{name} {value:.6f} {unit}" if isinstance(value, float)
              else f"{name} {value} {unit}")
    if args.json:
        body = json.dumps(summary, sort_keys=True, indent=2) + "\n"
        formats.atomic_write(args.json, body.encode())
    return 0


def _cmd_bench(args):
    spec = analysis.benchmark_spec(args.points)
    cloud = pointcloud.generate_synthetic(spec, args.seed)
    config = _grid_config(args)
    report = analysis.bench(cloud, config, repetitions=args.reps, seed=args.seed,
                            encode=not args.no_encode)
    for name, value, unit in report.lines():
        print(f"{name} {value:.6f} {unit}" if isinstance(value, float)
              else f"{name} {value} {unit}")
    if args.json:
        summary = {name: value for name, value, _ in report.lines()}
        summary["seed"] = args.seed
        body = json.dumps(summary, sort_keys=True, indent=2) + "\n"
        formats.atomic_write(args.json, body.encode())
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="revox",
        description="Reconfigurable voxel pipelines for LiDAR-style point clouds.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="emit a deterministic synthetic cloud",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--rings", type=int, default=100)
    p.add_argument("--points-per-ring", type=int, default=1000)
    p.add_argument("--max-range", type=float, default=50.0)
    p.add_argument("--height-band", type=float, nargs=2, default=[-2.0, 0.0])
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--blob", type=float, nargs=7, action="append",
                   metavar=("CX", "CY", "CZ", "EX", "EY", "EZ", "COUNT"),
                   help="dense cluster: center, extent, point count (repeatable)")
    p.add_argument("--out", required=True, help=".bin, .bin5, or .csv")
    p.add_argument("--meta", help="write a JSON metadata sidecar")
    _add_common(p)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("voxelize", help="partition a cloud into an RVOX1 dump",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("input", help="point cloud (.bin, .bin5, .csv)")
    _add_grid_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--meta", help="write a JSON metadata sidecar")
    _add_common(p)
    p.set_defaults(fn=_cmd_voxelize)

    p = sub.add_parser("reconfigure", help="single-resolution walk -> RWLK1",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("input")
    _add_grid_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--grid-out", help="also dump the grid as RVOX1")
    p.add_argument("--meta", help="write a JSON metadata sidecar")
    _add_common(p, threads=True)
    p.set_defaults(fn=_cmd_reconfigure)

    p = sub.add_parser("multires", help="two-resolution pipeline -> RWLK2",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("input")
    _add_grid_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--grid-out", help="also dump the fine grid as RVOX1")
    p.add_argument("--meta", help="write a JSON metadata sidecar")
    _add_common(p, threads=True)
    p.set_defaults(fn=_cmd_multires)

    p = sub.add_parser("encode", help="voxel features -> RFEA1 or CSV",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("input")
    _add_grid_flags(p)
    p.add_argument("--encoder", choices=("avg", "weighted"), default="avg")
    p.add_argument("--mode", choices=("second", "pillars"), default=None,
                   help="feature layout (default: preset's)")
    p.add_argument("--multires", action="store_true",
                   help="walk across two resolutions before encoding")
    p.add_argument("--out", required=True)
    p.add_argument("--grid-out", help="also dump the (fine) grid as RVOX1")
    p.add_argument("--walk-out", help="also dump the walk as RWLK1/RWLK2")
    p.add_argument("--meta", help="write a JSON metadata sidecar")
    _add_common(p, threads=True)
    p.set_defaults(fn=_cmd_encode)

    p = sub.add_parser("stats", help="CoV / displacement report from dumps",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--before", required=True, help="RVOX1 dump")
    p.add_argument("--after", help="RWLK1/RWLK2 dump")
    p.add_argument("--hist-out", help="write count histogram CSV")
    p.add_argument("--json", help="write machine-readable summary")
    _add_common(p)
    p.set_defaults(fn=_cmd_stats)

    p = sub.add_parser("bench", help="phase timings on the synthetic benchmark",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--points", type=int, default=100_000)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--no-encode", action="store_true")
    _add_grid_flags(p)
    p.add_argument("--json", help="write machine-readable summary")
    _add_common(p)
    p.set_defaults(fn=_cmd_bench)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit:
        raise
    except (OSError, ValueError) as exc:
        print(f"revox: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
