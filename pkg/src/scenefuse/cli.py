"""Command-line frontend: scene synthesis, fusion, voxelization, evaluation,
and array-level kernel access for external callers.

Every command writes a manifest.json with a full config echo; data goes to
files, logs go to stderr. Exit status is 0 only when all outputs were
written and the built-in consistency checks passed.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import _kernels, dataio, metrics, resample, synth, voxel
from .fusion import FeaturedPointCloud, FrameBundle, FuseConfig, densify_current, fuse, hcb_weights
from .geometry import CameraIntrinsics, RigidTransform
from .voxel import FEATURE_GRID_BOUNDS, VoxelBounds

log = logging.getLogger("scenefuse")


class CliError(Exception):
    pass


def _parse_bounds(bounds_str, res_str, default):
    if bounds_str is None and res_str is None:
        return default
    base = default or FEATURE_GRID_BOUNDS
    if bounds_str is not None:
        v = [float(x) for x in bounds_str.split(",")]
        if len(v) != 6:
            raise CliError(f"--bounds needs 6 values x0,x1,y0,y1,z0,z1, got {bounds_str!r}")
        lo, hi = (v[0], v[2], v[4]), (v[1], v[3], v[5])
    else:
        lo, hi = base.min_corner, base.max_corner
    if res_str is not None:
        r = [int(x) for x in res_str.split(",")]
        if len(r) != 3:
            raise CliError(f"--res needs 3 values X,Y,Z, got {res_str!r}")
        res = tuple(r)
    else:
        res = base.resolution
    try:
        return VoxelBounds(lo, hi, res)
    except ValueError as exc:
        raise CliError(f"bad bounds: {exc}") from None


def _bounds_dict(bounds):
    return {
        "min_corner": list(bounds.min_corner),
        "max_corner": list(bounds.max_corner),
        "resolution": list(bounds.resolution),
    }


def _bounds_from_dict(d):
    return VoxelBounds(d["min_corner"], d["max_corner"], d["resolution"])


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out_dir, command, config, outputs, counts=None, checks=None,
                    elapsed=None):
    manifest = {
        "command": command,
        "config": config,
        "outputs": sorted(str(o) for o in outputs),
        "backend": _kernels.backend(),
    }
    if counts is not None:
        manifest["counts"] = counts
    if checks is not None:
        manifest["checks"] = checks
    if elapsed is not None:
        manifest["elapsed_seconds"] = round(elapsed, 6)
    _write_json(Path(out_dir) / "manifest.json", manifest)
    return manifest


def _scan_name(i):
    return f"{i:06d}"


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _build_spec(args):
    if args.spec:
        meta = json.loads(Path(args.spec).read_text())
        spec = synth.SceneSpec.from_dict(meta.get("spec", meta))
        bounds = _bounds_from_dict(meta["bounds"]) if "bounds" in meta else None
    elif args.template:
        if args.template not in synth.TEMPLATES:
            raise CliError(
                f"unknown template {args.template!r}; choose from {sorted(synth.TEMPLATES)}"
            )
        builder, bounds = synth.TEMPLATES[args.template]
        kwargs = {"seed": args.seed}
        if args.frames is not None:
            kwargs["frame_count"] = args.frames
        if args.speed is not None:
            kwargs["speed"] = args.speed
        spec = builder(**kwargs)
    else:
        raise CliError("cmd synth needs --template or --spec")
    bounds = _parse_bounds(args.bounds, args.res, bounds or synth.CORRIDOR_BOUNDS)
    return spec, bounds


def write_scene(spec, bounds, out_dir, depth_tensors=False):
    """Materialize a synthetic scene as a KITTI-style sequence directory.

    With depth_tensors, each depth map is also written as a tensor file
    holding exactly the values the PNG decodes to (quantized, NaN where
    missing) so array-level consumers see the same inputs as the pipeline.
    """
    out = Path(out_dir)
    (out / "depth").mkdir(parents=True, exist_ok=True)
    (out / "features").mkdir(exist_ok=True)
    (out / "labels").mkdir(exist_ok=True)
    outputs = []

    intr = spec.intrinsics
    p2 = np.array([
        [intr.fx, 0.0, intr.cx, 0.0],
        [0.0, intr.fy, intr.cy, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ])
    tr = np.hstack([spec.cam_from_ego.rotation, spec.cam_from_ego.translation[:, None]])
    calib_lines = [
        "P2: " + " ".join(f"{v:.12e}" for v in p2.ravel()),
        "Tr: " + " ".join(f"{v:.12e}" for v in tr.ravel()),
    ]
    (out / "calib.txt").write_text("\n".join(calib_lines) + "\n")
    outputs.append(out / "calib.txt")

    track = dataio.PoseTrack([spec.camera_pose(s) for s in range(spec.frame_count)])
    (out / "poses.txt").write_text(dataio.format_poses(track))
    outputs.append(out / "poses.txt")

    for s in range(spec.frame_count):
        depth = synth.render_depth(spec, s)
        feats = synth.render_features(spec, s)
        dpath = out / "depth" / f"{_scan_name(s)}.png"
        png = dataio.write_depth_png(depth)
        dpath.write_bytes(png)
        fpath = out / "features" / f"{_scan_name(s)}.tensor"
        dataio.save_tensor(fpath, feats, "HWC")
        outputs += [dpath, fpath]
        if depth_tensors:
            tpath = out / "depth" / f"{_scan_name(s)}.tensor"
            dataio.save_tensor(tpath, dataio.read_depth_png(png), "HW")
            outputs.append(tpath)

    current = spec.frame_count - 1
    gt = synth.ground_truth_labels(spec, bounds)
    label_bytes, invalid_bytes = dataio.write_label_grid(gt)
    lpath = out / "labels" / f"{_scan_name(current)}.label"
    ipath = out / "labels" / f"{_scan_name(current)}.invalid"
    lpath.write_bytes(label_bytes)
    ipath.write_bytes(invalid_bytes)
    outputs += [lpath, ipath]

    scene_meta = {"spec": spec.to_dict(), "bounds": _bounds_dict(bounds)}
    _write_json(out / "scene.json", scene_meta)
    outputs.append(out / "scene.json")
    return outputs


def cmd_synth(args):
    t0 = time.perf_counter()
    spec, bounds = _build_spec(args)
    outputs = write_scene(spec, bounds, args.out, depth_tensors=args.depth_tensors)
    config = {
        "template": args.template,
        "spec_file": args.spec,
        "seed": args.seed,
        "frames": spec.frame_count,
        "speed": spec.speed,
        "bounds": _bounds_dict(bounds),
        "depth_tensors": args.depth_tensors,
    }
    manifest = _write_manifest(args.out, "synth", config, outputs,
                               elapsed=time.perf_counter() - t0)
    if args.json:
        print(json.dumps(manifest, sort_keys=True))
    log.info("synth: wrote %d files to %s", len(outputs) + 1, args.out)
    return 0


# ---------------------------------------------------------------------------
# fuse
# ---------------------------------------------------------------------------

def _load_scene_meta(scene_dir):
    path = Path(scene_dir) / "scene.json"
    if path.exists():
        return json.loads(path.read_text())
    return None


def _load_depth(scene, scan):
    png = Path(scene) / "depth" / f"{_scan_name(scan)}.png"
    tns = Path(scene) / "depth" / f"{_scan_name(scan)}.tensor"
    if png.exists():
        return dataio.read_depth_png(png.read_bytes()), png
    if tns.exists():
        arr, _ = dataio.load_tensor(tns)
        return arr.astype(np.float64), tns
    return None, png


def _load_frames(args):
    scene = Path(args.scene)
    missing = []
    for name in ("calib.txt", "poses.txt"):
        if not (scene / name).exists():
            missing.append(scene / name)
    if missing:
        raise CliError("missing required files: " + ", ".join(str(m) for m in missing))
    poses = dataio.parse_poses((scene / "poses.txt").read_text())

    index = args.index if args.index is not None else len(poses) - 1
    if not 0 <= index < len(poses):
        raise CliError(f"scan index {index} outside pose track 0..{len(poses) - 1}")
    scans = [max(index - k * args.stride, 0) for k in range(args.frames)]

    frames = []
    for offset, scan in enumerate(scans):
        depth, dpath = _load_depth(scene, scan)
        fpath = scene / "features" / f"{_scan_name(scan)}.tensor"
        if depth is None:
            missing.append(dpath)
        if not fpath.exists():
            missing.append(fpath)
        if missing:
            continue
        feats, _ = dataio.load_tensor(fpath)
        calib = dataio.parse_calib((scene / "calib.txt").read_text(),
                                   width=depth.shape[1], height=depth.shape[0])
        frames.append(FrameBundle(
            features=feats.astype(np.float32),
            depth=depth,
            intrinsics=calib.intrinsics,
            pose=poses[scan],
            timestamp_index=offset,
        ))
    if missing:
        raise CliError("missing frame files: " + ", ".join(str(m) for m in missing))
    calib = dataio.parse_calib((scene / "calib.txt").read_text(),
                               width=frames[0].depth.shape[1],
                               height=frames[0].depth.shape[0])
    return frames, calib, index


def _fuse_config(args):
    return FuseConfig(
        n_frames=args.frames,
        densify_factor=args.factor,
        enable_hcb=not args.no_hcb,
        enable_ccfd=not args.no_ccfd,
    )


def _run_fuse(args):
    frames, calib, index = _load_frames(args)
    cfg = _fuse_config(args)
    cloud = fuse(frames, cfg)
    if args.coords == "ego":
        ego_from_cam = calib.camera_from_lidar().inverse()
        cloud = FeaturedPointCloud(
            ego_from_cam.apply(cloud.positions), cloud.features,
            cloud.origin, cloud.source_pixel,
        )
    return cloud, index


def _fuse_echo(args, index):
    return {
        "scene": str(args.scene),
        "index": index,
        "frames": args.frames,
        "factor": args.factor,
        "enable_hcb": not args.no_hcb,
        "enable_ccfd": not args.no_ccfd,
        "stride": args.stride,
        "coords": args.coords,
        "deterministic": args.deterministic,
        "threads": args.threads,
    }


def _origin_counts(cloud):
    offs, counts = np.unique(cloud.origin, return_counts=True)
    return {f"t-{int(o)}": int(c) for o, c in zip(offs, counts)}


def cmd_fuse(args):
    t0 = time.perf_counter()
    _kernels.set_threads(args.threads)
    cloud, index = _run_fuse(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for name, arr, order in (
        ("positions", cloud.positions, "NC"),
        ("features", cloud.features, "NC"),
        ("origins", cloud.origin, "N"),
        ("source_pixels", cloud.source_pixel, "NC"),
    ):
        path = out / f"{name}.tensor"
        dataio.save_tensor(path, arr, order)
        outputs.append(path)
    if args.ply:
        path = out / "cloud.ply"
        path.write_bytes(dataio.write_ply(cloud))
        outputs.append(path)
    counts = _origin_counts(cloud)
    checks = {"origin_counts_sum": "pass" if sum(counts.values()) == len(cloud) else "fail"}
    manifest = _write_manifest(out, "fuse", _fuse_echo(args, index), outputs,
                               counts=counts, checks=checks,
                               elapsed=time.perf_counter() - t0)
    if args.json:
        print(json.dumps(manifest, sort_keys=True))
    log.info("fuse: %d points (%s)", len(cloud), counts)
    return 0 if all(v == "pass" for v in checks.values()) else 1


# ---------------------------------------------------------------------------
# voxelize
# ---------------------------------------------------------------------------

def _load_cloud(cloud_dir):
    cdir = Path(cloud_dir)
    missing = [cdir / f"{n}.tensor"
               for n in ("positions", "features", "origins", "source_pixels")
               if not (cdir / f"{n}.tensor").exists()]
    if missing:
        raise CliError("missing cloud files: " + ", ".join(str(m) for m in missing))
    positions, _ = dataio.load_tensor(cdir / "positions.tensor")
    features, _ = dataio.load_tensor(cdir / "features.tensor")
    origins, _ = dataio.load_tensor(cdir / "origins.tensor")
    pixels, _ = dataio.load_tensor(cdir / "source_pixels.tensor")
    cloud = FeaturedPointCloud(positions, features, origins, pixels)
    manifest_path = cdir / "manifest.json"
    config = {}
    if manifest_path.exists():
        config = json.loads(manifest_path.read_text()).get("config", {})
    return cloud, config


def _default_bounds_for(scene_dir):
    if scene_dir:
        meta = _load_scene_meta(scene_dir)
        if meta and "bounds" in meta:
            return _bounds_from_dict(meta["bounds"])
    return FEATURE_GRID_BOUNDS


def cmd_voxelize(args):
    t0 = time.perf_counter()
    _kernels.set_threads(args.threads)
    if args.cloud:
        cloud, cloud_cfg = _load_cloud(args.cloud)
        n_frames = args.frames if args.frames_given else (cloud_cfg.get("frames") or args.frames)
        scene_dir = args.scene or cloud_cfg.get("scene")
    elif args.scene:
        cloud, _ = _run_fuse(args)
        n_frames = args.frames
        scene_dir = args.scene
    else:
        raise CliError("cmd voxelize needs --cloud or --scene")
    bounds = _parse_bounds(args.bounds, args.res, _default_bounds_for(scene_dir))

    grid = voxel.voxelize(cloud, bounds, n_frames,
                          deterministic=args.deterministic,
                          shards=1 if args.deterministic else max(args.threads, 1))
    masks = voxel.occupancy_masks(grid)
    stats = voxel.coverage_stats(cloud, bounds)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    dataio.save_tensor(out / "grid_features.tensor", grid.features, "XYZC")
    dataio.save_tensor(out / "grid_counts.tensor", grid.counts, "XYZ")
    dataio.save_tensor(out / "mask_cross.tensor",
                       masks.cross_mask.astype(np.uint8), "XYZ")
    outputs += [out / "grid_features.tensor", out / "grid_counts.tensor",
                out / "mask_cross.tensor"]
    (out / "stats.txt").write_text(stats.as_table() + "\n")
    _write_json(out / "stats.json", stats.to_dict())
    outputs += [out / "stats.txt", out / "stats.json"]

    if args.labels_out:
        feat = grid.features
        if args.labels_res:
            target = tuple(int(v) for v in args.labels_res.split(","))
            feat = resample.trilinear_resize(feat, target)
        pred = np.where(feat.max(axis=-1) > 0,
                        feat.argmax(axis=-1), 0).astype(np.uint16)
        lb, ib = dataio.write_label_grid(
            metrics.LabelGrid(pred, np.zeros(pred.shape, dtype=bool)))
        (out / "pred.label").write_bytes(lb)
        (out / "pred.invalid").write_bytes(ib)
        outputs += [out / "pred.label", out / "pred.invalid"]

    inside = voxel.filter_bounds(cloud, bounds)
    checks = {
        "counts_match_inbounds_points":
            "pass" if int(grid.counts.sum()) == len(inside) else "fail",
        "masks_partition_grid":
            "pass" if bool(np.all(masks.cross_mask ^ masks.self_mask)) else "fail",
    }
    config = {
        "cloud": str(args.cloud) if args.cloud else None,
        "scene": str(args.scene) if args.scene else None,
        "bounds": _bounds_dict(bounds),
        "n_frames": n_frames,
        "deterministic": args.deterministic,
        "threads": args.threads,
        "labels_out": bool(args.labels_out),
        "labels_res": args.labels_res,
    }
    if args.scene:
        config["fuse"] = _fuse_echo(args, args.index)
    manifest = _write_manifest(out, "voxelize", config, outputs, checks=checks,
                               counts={"in_bounds_points": len(inside),
                                       "occupied_voxels": int(masks.cross_mask.sum())},
                               elapsed=time.perf_counter() - t0)
    if args.json:
        print(json.dumps(manifest, sort_keys=True))
    log.info("voxelize: %d in-bounds points into %s voxels", len(inside),
             "x".join(str(r) for r in bounds.resolution))
    return 0 if all(v == "pass" for v in checks.values()) else 1


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _read_label_file(label_path, invalid_path, dims):
    label_bytes = Path(label_path).read_bytes()
    if invalid_path and Path(invalid_path).exists():
        invalid_bytes = Path(invalid_path).read_bytes()
    else:
        n = dims[0] * dims[1] * dims[2]
        invalid_bytes = bytes((n + 7) // 8)
    return dataio.read_label_grid(label_bytes, invalid_bytes, dims)


def _view_mask_for(args, bounds):
    meta = _load_scene_meta(args.scene) if args.scene else None
    if meta:
        spec = synth.SceneSpec.from_dict(meta["spec"])
        intr = spec.intrinsics
        cam_from_ego = spec.cam_from_ego
    elif args.calib:
        if not args.image_size:
            raise CliError("--calib also needs --image-size W,H for the frustum test")
        w, h = (int(v) for v in args.image_size.split(","))
        calib = dataio.parse_calib(Path(args.calib).read_text(), width=w, height=h)
        intr = calib.intrinsics
        cam_from_ego = calib.camera_from_lidar()
    else:
        raise CliError("region evaluation needs --scene or --calib for the camera model")
    return metrics.oov_mask(bounds, intr, cam_from_ego)


def cmd_eval(args):
    t0 = time.perf_counter()
    dims = tuple(int(v) for v in args.dims.split(","))
    pred = _read_label_file(args.pred, args.pred_invalid, dims)
    gt = _read_label_file(args.gt, args.gt_invalid, dims)
    num_classes = int(max(pred.labels.max(), gt.labels.max())) + 1
    num_classes = max(num_classes, 2)

    default_bounds = None
    if args.scene:
        meta = _load_scene_meta(args.scene)
        if meta and "bounds" in meta:
            b = _bounds_from_dict(meta["bounds"])
            default_bounds = VoxelBounds(b.min_corner, b.max_corner, dims)
    bounds = _parse_bounds(args.bounds, None, default_bounds)
    if bounds is None or bounds.resolution != dims:
        base = bounds or FEATURE_GRID_BOUNDS
        bounds = VoxelBounds(base.min_corner, base.max_corner, dims)

    view = None
    region_mask = None
    decomposition = None
    if args.region in ("inview", "oov") or args.scene or args.calib:
        try:
            view = _view_mask_for(args, bounds)
        except CliError:
            if args.region in ("inview", "oov"):
                raise
    if view is not None:
        region_mask = view.in_view if args.region == "inview" else (
            ~view.in_view if args.region == "oov" else None)

    acc = metrics.ConfusionAccumulator(num_classes)
    metrics.accumulate(acc, pred.labels, gt, region_mask)
    result = metrics.finalize(acc)

    if view is not None:
        acc_all = metrics.ConfusionAccumulator(num_classes)
        metrics.accumulate(acc_all, pred.labels, gt, None)
        acc_in = metrics.ConfusionAccumulator(num_classes)
        metrics.accumulate(acc_in, pred.labels, gt, view.in_view)
        acc_out = metrics.ConfusionAccumulator(num_classes)
        metrics.accumulate(acc_out, pred.labels, gt, ~view.in_view)
        merged = acc_in.merge(acc_out)
        same = (
            np.array_equal(merged.tp, acc_all.tp)
            and np.array_equal(merged.fp, acc_all.fp)
            and np.array_equal(merged.fn, acc_all.fn)
            and (merged.occ_tp, merged.occ_fp, merged.occ_fn)
            == (acc_all.occ_tp, acc_all.occ_fp, acc_all.occ_fn)
        )
        decomposition = "pass" if same else "fail"

    lines = [
        f"region = {args.region}",
        f"scored_voxels = {acc.scored}",
        f"empty = {str(result.empty).lower()}",
        f"iou = {result.iou:.6f}",
        f"miou = {result.miou:.6f}",
    ]
    per_class = {}
    for c in range(1, num_classes):
        if np.isfinite(result.per_class_iou[c]):
            lines.append(f"class_{c:02d}_iou = {result.per_class_iou[c]:.6f}")
            per_class[str(c)] = result.per_class_iou[c]
    if decomposition is not None:
        lines.append(f"decomposition_check = {decomposition}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    report = {
        "region": args.region,
        "scored_voxels": acc.scored,
        "empty": result.empty,
        "iou": result.iou,
        "miou": result.miou,
        "per_class_iou": per_class,
        "decomposition_check": decomposition,
    }
    _write_json(out / "report.json", report)
    if args.json:
        print(json.dumps(report, sort_keys=True))
    config = {
        "pred": str(args.pred), "gt": str(args.gt), "dims": list(dims),
        "region": args.region, "scene": args.scene, "calib": args.calib,
        "bounds": _bounds_dict(bounds),
    }
    checks = {} if decomposition is None else {"decomposition": decomposition}
    _write_manifest(out, "eval", config,
                    [out / "report.txt", out / "report.json"],
                    checks=checks, elapsed=time.perf_counter() - t0)
    log.info("eval: region=%s iou=%.4f miou=%.4f", args.region, result.iou, result.miou)
    return 0 if decomposition in (None, "pass") else 1


# ---------------------------------------------------------------------------
# kernel ops (array-level access for external bindings)
# ---------------------------------------------------------------------------

def _req_path(request_dir, name):
    p = Path(name)
    return p if p.is_absolute() else request_dir / p


def _load_req_tensor(request_dir, name):
    arr, _ = dataio.load_tensor(_req_path(request_dir, name))
    return arr


def _intrinsics_from(d):
    return CameraIntrinsics(fx=d["fx"], fy=d["fy"], cx=d["cx"], cy=d["cy"],
                            width=d["width"], height=d["height"])


def _transform_from(d):
    return RigidTransform(np.array(d["rotation"]), np.array(d["translation"]))


def cmd_kernel(args):
    request_path = Path(args.request)
    request_dir = request_path.parent
    req = json.loads(request_path.read_text())
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    response = {"op": args.op}

    if args.op == "fuse":
        frames = []
        for fd in req["frames"]:
            depth = _load_req_tensor(request_dir, fd["depth"]).astype(np.float64)
            feats = _load_req_tensor(request_dir, fd["features"]).astype(np.float32)
            frames.append(FrameBundle(
                features=feats, depth=depth,
                intrinsics=_intrinsics_from(fd["intrinsics"]),
                pose=_transform_from(fd["pose"]),
                timestamp_index=int(fd["timestamp_index"]),
            ))
        c = req.get("config", {})
        cfg = FuseConfig(
            n_frames=int(c.get("n_frames", len(frames))),
            densify_factor=int(c.get("densify_factor", 2)),
            enable_hcb=bool(c.get("enable_hcb", True)),
            enable_ccfd=bool(c.get("enable_ccfd", True)),
        )
        cloud = fuse(frames, cfg)
        dataio.save_tensor(out / "positions.tensor", cloud.positions, "NC")
        dataio.save_tensor(out / "features.tensor", cloud.features, "NC")
        dataio.save_tensor(out / "origins.tensor", cloud.origin, "N")
        dataio.save_tensor(out / "source_pixels.tensor", cloud.source_pixel, "NC")
        response.update(count=len(cloud), counts_per_origin=_origin_counts(cloud),
                        outputs=["positions.tensor", "features.tensor",
                                 "origins.tensor", "source_pixels.tensor"])

    elif args.op == "voxelize":
        positions = _load_req_tensor(request_dir, req["positions"]).astype(np.float64)
        feats = _load_req_tensor(request_dir, req["features"]).astype(np.float32)
        cloud = FeaturedPointCloud(
            positions, feats,
            np.zeros(positions.shape[0], dtype=np.int32),
            np.zeros((positions.shape[0], 2)),
        )
        bounds = _bounds_from_dict(req["bounds"])
        grid = voxel.voxelize(cloud, bounds, int(req["n_frames"]),
                              deterministic=bool(req.get("deterministic", True)))
        dataio.save_tensor(out / "grid_features.tensor", grid.features, "XYZC")
        dataio.save_tensor(out / "grid_counts.tensor", grid.counts, "XYZ")
        response.update(occupied=int((grid.counts > 0).sum()),
                        outputs=["grid_features.tensor", "grid_counts.tensor"])

    elif args.op == "hcb-weights":
        depth = _load_req_tensor(request_dir, req["depth"]).astype(np.float64)
        dataio.save_tensor(out / "weights.tensor", hcb_weights(depth), "HW")
        response.update(outputs=["weights.tensor"])

    elif args.op == "densify":
        depth = _load_req_tensor(request_dir, req["depth"]).astype(np.float64)
        feats = _load_req_tensor(request_dir, req["features"]).astype(np.float32)
        h, w = depth.shape
        intr = CameraIntrinsics(fx=1.0, fy=1.0, cx=0.0, cy=0.0, width=w, height=h)
        frame = FrameBundle(features=feats, depth=depth, intrinsics=intr,
                            pose=RigidTransform.identity(), timestamp_index=0)
        grid, up_depth, up_feats = densify_current(frame, int(req["factor"]))
        dataio.save_tensor(out / "up_grid.tensor", grid.coords, "HWC")
        dataio.save_tensor(out / "up_depth.tensor", up_depth, "HW")
        dataio.save_tensor(out / "up_features.tensor",
                           up_feats.astype(np.float32), "HWC")
        response.update(outputs=["up_grid.tensor", "up_depth.tensor",
                                 "up_features.tensor"])

    elif args.op == "oov-mask":
        bounds = _bounds_from_dict(req["bounds"])
        intr = _intrinsics_from(req["intrinsics"])
        cam_from_ego = _transform_from(req["cam_from_ego"])
        view = metrics.oov_mask(bounds, intr, cam_from_ego)
        dataio.save_tensor(out / "in_view.tensor",
                           view.in_view.astype(np.uint8), "XYZ")
        response.update(in_view=int(view.in_view.sum()),
                        outputs=["in_view.tensor"])

    elif args.op == "eval":
        pred = _load_req_tensor(request_dir, req["pred"]).astype(np.int64)
        gt_labels = _load_req_tensor(request_dir, req["gt"]).astype(np.int64)
        if "gt_invalid" in req:
            invalid = _load_req_tensor(request_dir, req["gt_invalid"]).astype(bool)
        else:
            invalid = np.zeros(gt_labels.shape, dtype=bool)
        region = None
        if "region_mask" in req:
            region = _load_req_tensor(request_dir, req["region_mask"]).astype(bool)
        num_classes = int(req.get("num_classes",
                                  max(int(pred.max()), int(gt_labels.max())) + 1))
        acc = metrics.ConfusionAccumulator(max(num_classes, 2))
        metrics.accumulate(acc, pred, metrics.LabelGrid(gt_labels, invalid), region)
        result = metrics.finalize(acc)
        response.update(
            iou=result.iou, miou=result.miou, empty=result.empty,
            scored_voxels=acc.scored,
            per_class_iou={str(c): result.per_class_iou[c]
                           for c in range(1, acc.num_classes)
                           if np.isfinite(result.per_class_iou[c])},
            outputs=[],
        )
    else:
        raise CliError(f"unknown kernel op {args.op!r}")

    _write_json(out / "response.json", response)
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _add_fuse_flags(p):
    p.add_argument("--scene", help="sequence directory (calib, poses, depth, features)")
    p.add_argument("--index", type=int, default=None,
                   help="current scan index (default: last)")
    p.add_argument("--frames", type=int, default=4, help="frames fused, current included")
    p.add_argument("--factor", type=int, default=2, help="densification factor")
    p.add_argument("--no-hcb", action="store_true", help="disable historical blurring")
    p.add_argument("--no-ccfd", action="store_true", help="disable densification")
    p.add_argument("--stride", type=int, default=1, help="scan stride into the past")
    p.add_argument("--coords", choices=("ego", "camera"), default="ego",
                   help="output coordinate frame")
    p.add_argument("--deterministic", action="store_true",
                   help="force ordered accumulation")
    p.add_argument("--threads", type=int, default=1)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="scenefuse",
        description="Temporal point-feature fusion and voxel evaluation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene directory")
    p.add_argument("--template", help="|".join(sorted(synth.TEMPLATES)))
    p.add_argument("--spec", help="SceneSpec JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--speed", type=float, default=None)
    p.add_argument("--bounds", help="x0,x1,y0,y1,z0,z1 in meters")
    p.add_argument("--res", help="X,Y,Z voxel counts")
    p.add_argument("--depth-tensors", action="store_true",
                   help="also write PNG-equivalent depth tensor files")
    p.add_argument("--json", action="store_true",
                   help="print the manifest JSON to stdout")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fuse", help="fuse a frame sequence into a point cloud")
    _add_fuse_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--ply", action="store_true", help="also write an ASCII PLY")
    p.add_argument("--json", action="store_true",
                   help="print the manifest JSON to stdout")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("voxelize", help="aggregate a cloud into a feature grid")
    _add_fuse_flags(p)
    p.add_argument("--cloud", help="directory produced by cmd fuse")
    p.add_argument("--out", required=True)
    p.add_argument("--bounds", help="x0,x1,y0,y1,z0,z1 in meters")
    p.add_argument("--res", help="X,Y,Z voxel counts")
    p.add_argument("--labels-out", action="store_true",
                   help="write argmax labels (pred.label/.invalid)")
    p.add_argument("--labels-res", default=None,
                   help="trilinear-upsample features to X,Y,Z before argmax")
    p.add_argument("--json", action="store_true",
                   help="print the manifest JSON to stdout")
    p.set_defaults(func=cmd_voxelize)

    p = sub.add_parser("eval", help="score a prediction against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--pred-invalid", default=None)
    p.add_argument("--gt", required=True)
    p.add_argument("--gt-invalid", default=None)
    p.add_argument("--dims", default="256,256,32")
    p.add_argument("--region", choices=("all", "inview", "oov"), default="all")
    p.add_argument("--scene", help="scene directory providing camera and bounds")
    p.add_argument("--calib", help="calib.txt for the frustum test")
    p.add_argument("--image-size", help="W,H used with --calib")
    p.add_argument("--bounds", help="x0,x1,y0,y1,z0,z1 of the label grid")
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true",
                   help="print the metrics report JSON to stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("kernel", help="array-level ops on tensor files")
    p.add_argument("op", choices=("fuse", "voxelize", "hcb-weights", "densify",
                                  "oov-mask", "eval"))
    p.add_argument("--request", required=True, help="request JSON")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_kernel)

    return parser


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "frames"):
        args.frames_given = "--frames" in (argv if argv is not None else sys.argv)
    try:
        return args.func(args)
    except (CliError, dataio.FormatError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
