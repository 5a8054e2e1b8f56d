"""
Command line entry point.

Subcommands: solve, convergence, medial, geodesic, diffusion-curves, wave,
step-count, filtering. Exit codes: 0 on success, 2 on bad arguments or unknown
scene ids, 1 on runtime failures. With --json, machine-readable results go to
stdout; logs go to stderr and the log directory.
"""

import argparse
import json
import sys

import numpy as np
from pydantic import ValidationError

from app.config import ConfigFileError, load_run_file, merge_settings, solver_env_defaults
from app.errors import PWoSError, SceneError
from app.services.convergence import (
    filtering_study,
    radius_cap_study,
    run_convergence,
    scene_overrides,
    solve_scene,
    step_count_study,
    summarize_convergence,
    write_convergence_csv,
)
from app.services.diffusion_curves import (
    CameraConfig,
    render_diffusion_curves,
    solve_diffusion_on_vertices,
    write_image,
)
from app.services.filtering import FilterOptions
from app.services.geodesic import HeatConfig, geodesic_distance
from app.services.mesh_io import load_boundary, load_surface, write_ply
from app.services.scenes import Tessellation, builtin_scene, scene_atlas
from app.services.solver import SolverConfig, WalkContext, build_atlas, estimate_batch
from app.services.wave import WaveConfig, simulate_wave
from app.utils import get_logger, serialize_data

harness_logger = get_logger("harness_logger", "harness.log")


class UsageError(PWoSError, ValueError):
    """Inconsistent command-line arguments."""


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _cap_list(text):
    return [None if v.strip().lower() == "none" else float(v) for v in text.split(",") if v.strip()]


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="Master seed.")
    common.add_argument("--threads", type=int, help="Worker threads.")
    common.add_argument("--epsilon", type=float, help="ε-shell width.")
    common.add_argument("--nv", type=int, help="Volume samples per step (N_V).")
    common.add_argument("--np", dest="n_paths", type=_int_list, help="Paths per point (list for studies).")
    common.add_argument("--lambda", dest="lam", type=float, help="Local feature size floor.")
    common.add_argument("--scale-axis-s", type=float, help="Medial axis pruning scale.")
    common.add_argument("--sigma", type=float, help="Screening coefficient.")
    common.add_argument("--radius-cap", type=float, help="Upper bound on sphere radii.")
    common.add_argument("--filter-samples", type=int, help="Samples per vertex of the mean value filter.")
    common.add_argument("--filter-iters", type=int, help="Filter iterations.")
    common.add_argument("--config", help="TOML run file; flags override it.")
    common.add_argument("--json", action="store_true", help="Print results as JSON.")
    common.add_argument("--omit-timing", action="store_true", help="Write zero wall times.")
    return common


def _geometry_arguments(parser, boundary=True):
    parser.add_argument("--scene", help="Builtin scene id.")
    parser.add_argument("--mesh", help="OBJ or PLY surface.")
    if boundary:
        parser.add_argument("--boundary", help="OBJ boundary (polylines or points).")
        parser.add_argument("--values", help="CSV sidecar with boundary values.")


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="pwos", description="Projected walk on spheres on surfaces.")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", parents=[common], help="Solve a scene at probe points.")
    _geometry_arguments(solve)
    solve.add_argument("--probes", type=int, default=100)
    solve.add_argument("--output", help="PLY with per-vertex estimates.")
    solve.set_defaults(handler=run_solve)

    convergence = sub.add_parser("convergence", parents=[common], help="RMSE against N_P.")
    convergence.add_argument("--scene", required=True)
    convergence.add_argument("--probes", type=int, default=100)
    convergence.add_argument("--seeds", type=_int_list)
    convergence.add_argument("--caps", type=_cap_list, help="Radius caps ('none' for unbounded).")
    convergence.add_argument("--output", help="CSV path (stdout when omitted).")
    convergence.set_defaults(handler=run_convergence_command)

    medial = sub.add_parser("medial", parents=[common], help="Dump the medial atlas.")
    _geometry_arguments(medial, boundary=False)
    medial.add_argument("--output", help="PLY point cloud of ball centers.")
    medial.set_defaults(handler=run_medial)

    geodesic = sub.add_parser("geodesic", parents=[common], help="Heat-method distance.")
    _geometry_arguments(geodesic)
    geodesic.add_argument("--t", type=float, help="Heat time.")
    geodesic.add_argument("--output", help="PLY with per-vertex distances.")
    geodesic.set_defaults(handler=run_geodesic)

    curves = sub.add_parser("diffusion-curves", parents=[common], help="Surface diffusion curves.")
    _geometry_arguments(curves)
    curves.add_argument("--width", type=int)
    curves.add_argument("--height", type=int)
    curves.add_argument("--spp", type=int, help="Samples per pixel.")
    curves.add_argument("--fov", type=float)
    curves.add_argument("--vertices", action="store_true", help="Solve at vertices instead of rendering.")
    curves.add_argument("--output", required=True, help="Image (.png/.ppm) or PLY with --vertices.")
    curves.set_defaults(handler=run_diffusion_curves)

    wave = sub.add_parser("wave", parents=[common], help="Wave animation, one PLY per frame.")
    _geometry_arguments(wave, boundary=False)
    wave.add_argument("--frames", type=int)
    wave.add_argument("--dt", type=float)
    wave.add_argument("--pinned-vertex", type=int)
    wave.add_argument("--output-dir", required=True)
    wave.set_defaults(handler=run_wave)

    steps = sub.add_parser("step-count", parents=[common], help="Walk length against forced LFS.")
    steps.add_argument("--lfs", type=_float_list, default=[0.99, 0.5, 0.25, 0.125, 0.0625])
    steps.add_argument("--probes", type=int, default=100)
    steps.set_defaults(handler=run_step_count)

    filtering = sub.add_parser("filtering", parents=[common], help="Filtering study on the curved disk.")
    filtering.set_defaults(handler=run_filtering)
    return parser


def _sections(args):
    sections = load_run_file(args.config) if args.config else {}
    solver = dict(sections.get("solver", {}))
    if "lambda" in solver:
        solver["lambda_"] = solver.pop("lambda")
    sections["solver"] = solver
    return sections


def _path_count(args):
    return args.n_paths[-1] if args.n_paths else None


def solver_settings(args, sections):
    """Solver keywords by precedence: flags > [solver] section > environment."""
    flags = {
        "seed": args.seed,
        "threads": args.threads,
        "epsilon": args.epsilon,
        "n_volume": args.nv,
        "n_paths": _path_count(args),
        "lambda_": args.lam,
        "scale_axis_s": args.scale_axis_s,
        "sigma": args.sigma,
        "radius_cap": args.radius_cap,
    }
    return merge_settings(flags, sections.get("solver"), solver_env_defaults())


def filter_options(args, sections):
    flags = {"n_filter_samples": args.filter_samples, "iterations": args.filter_iters}
    return FilterOptions(**merge_settings(flags, sections.get("filter")))


def _scene_spec(args, sections):
    scene_section = dict(sections.get("scene", {}))
    scene_id = getattr(args, "scene", None) or scene_section.pop("id", None)
    scene_section.pop("id", None)
    if scene_id is None:
        return None
    tessellation = Tessellation(**scene_section) if scene_section else None
    return builtin_scene(scene_id, tessellation)


def _scene_overrides(settings):
    return scene_overrides(
        epsilon=settings.get("epsilon"),
        n_volume=settings.get("n_volume"),
        n_paths=settings.get("n_paths"),
        lam=settings.get("lambda_"),
        scale_axis_s=settings.get("scale_axis_s"),
        sigma=settings.get("sigma"),
        radius_cap=settings.get("radius_cap"),
        threads=settings.get("threads"),
        max_steps=settings.get("max_steps"),
        seed_count=settings.get("seed_count"),
    )


def _geometry(args, sections, need_boundary=True):
    """(scene, boundary, spec or None) from --scene or from --mesh/--boundary files."""
    spec = _scene_spec(args, sections)
    if spec is not None:
        return spec.scene, spec.boundary, spec
    if not getattr(args, "mesh", None):
        raise UsageError("Either --scene or --mesh is required.")
    scene = load_surface(args.mesh)
    boundary = None
    if need_boundary:
        if not args.boundary:
            raise UsageError("--boundary is required with --mesh.")
        boundary = load_boundary(args.boundary, values_path=args.values)
    return scene, boundary, None


def run_solve(args, sections):
    settings = solver_settings(args, sections)
    scene, boundary, spec = _geometry(args, sections)
    seed = settings.get("seed", 0)
    if spec is not None:
        cfg = spec.solver_config(**_scene_overrides(settings), seed=seed)
        atlas = scene_atlas(spec, cfg)
        result = solve_scene(spec, _scene_overrides(settings), args.probes, seed, atlas)
        ctx = WalkContext(scene, boundary, atlas, cfg, spec.source)
    else:
        cfg = SolverConfig(**settings)
        atlas = build_atlas(scene, cfg)
        ctx = WalkContext(scene, boundary, atlas, cfg)
        result = {"scene": args.mesh, "n_paths": cfg.n_paths, "seed": seed}
    if args.output:
        est = estimate_batch(ctx, scene.vertices)
        write_ply(
            args.output,
            scene.vertices,
            faces=scene.triangles if len(scene.triangles) else None,
            scalars={"u": est.mean[:, 0], "std_error": est.std_error[:, 0]},
        )
        result["output"] = args.output
        result["vertex_avg_steps"] = float(np.mean(est.avg_steps))
    if args.omit_timing and "wall_seconds" in result:
        result["wall_seconds"] = 0.0
    return result


def run_convergence_command(args, sections):
    settings = solver_settings(args, sections)
    spec = _scene_spec(args, sections)
    overrides = _scene_overrides(settings)
    overrides.pop("n_paths", None)
    n_paths_list = args.n_paths or [16, 64, 256, 1024, 4096]
    seeds = args.seeds or [settings.get("seed", 0)]
    if args.caps:
        records = radius_cap_study(spec, args.caps, n_paths_list, args.probes, seeds, overrides)
    else:
        records = run_convergence(spec, n_paths_list, args.probes, seeds, overrides)
    if args.output:
        write_convergence_csv(records, args.output, omit_timing=args.omit_timing)
    elif not args.json:
        write_convergence_csv(records, sys.stdout, omit_timing=args.omit_timing)
    rows = [r.model_dump() for r in records]
    if args.omit_timing:
        for row in rows:
            row["wall_seconds"] = 0.0
    return {"records": rows, "summary": summarize_convergence(records)}


def run_medial(args, sections):
    settings = solver_settings(args, sections)
    scene, _, spec = _geometry(args, sections, need_boundary=False)
    if spec is not None:
        cfg = spec.solver_config(**_scene_overrides(settings), seed=settings.get("seed", 0))
        atlas = scene_atlas(spec, cfg)
    else:
        atlas = build_atlas(scene, SolverConfig(**settings))
    if args.output:
        write_ply(args.output, atlas.centers, scalars={"radius": atlas.radii})
    return atlas.summary()


def run_geodesic(args, sections):
    settings = solver_settings(args, sections)
    scene, boundary, _ = _geometry(args, sections)
    heat = dict(sections.get("heat", {}))
    if args.t is not None:
        heat["t"] = args.t
    cfg = HeatConfig(t=heat.get("t"), solver=SolverConfig(**settings))
    distances = geodesic_distance(scene, boundary, cfg)
    if args.output:
        write_ply(
            args.output,
            scene.vertices,
            faces=scene.triangles if len(scene.triangles) else None,
            scalars={"distance": distances},
        )
    return {"vertices": len(distances), "max": float(distances.max()), "mean": float(distances.mean())}


def run_diffusion_curves(args, sections):
    settings = solver_settings(args, sections)
    scene, curves, _ = _geometry(args, sections)
    cfg = SolverConfig(**settings)
    if args.vertices:
        colors = solve_diffusion_on_vertices(scene, curves, cfg, filter_options(args, sections))
        write_ply(
            args.output,
            scene.vertices,
            faces=scene.triangles if len(scene.triangles) else None,
            colors=np.clip(colors, 0.0, 1.0) if colors.shape[1] == 3 else None,
            scalars=None if colors.shape[1] == 3 else {"u": colors[:, 0]},
        )
        return {"output": args.output, "vertices": len(colors)}
    camera_flags = {
        "width": args.width,
        "height": args.height,
        "samples_per_pixel": args.spp,
        "fov": args.fov,
    }
    camera = CameraConfig(**merge_settings(camera_flags, sections.get("camera")))
    image = render_diffusion_curves(scene, curves, camera, cfg)
    write_image(args.output, image)
    return {"output": args.output, "width": camera.width, "height": camera.height}


def run_wave(args, sections):
    settings = solver_settings(args, sections)
    scene, _, _ = _geometry(args, sections, need_boundary=False)
    flags = {"frames": args.frames, "dt": args.dt, "pinned_vertex": args.pinned_vertex}
    wave_cfg = WaveConfig(**merge_settings(flags, sections.get("wave")))
    history = simulate_wave(scene, wave_cfg, SolverConfig(**settings), output_dir=args.output_dir)
    return {"frames": len(history), "max_abs": [float(np.abs(u).max()) for u in history]}


def run_step_count(args, sections):
    settings = solver_settings(args, sections)
    rows = step_count_study(
        lfs_values=args.lfs,
        epsilon=settings.get("epsilon", 1e-3),
        n_probes=args.probes,
        n_paths=settings.get("n_paths", 64),
        seed=settings.get("seed", 0),
    )
    return {"rows": rows}


def run_filtering(args, sections):
    settings = solver_settings(args, sections)
    options = filter_options(args, sections)
    rows = filtering_study(
        initial_paths=options.initial_paths,
        n_filter_samples=options.n_filter_samples,
        iterations=options.iterations,
        seed=settings.get("seed", 0),
    )
    if args.omit_timing:
        for row in rows:
            row["wall_seconds"] = 0.0
    return {"rows": rows}


def _print_result(result, args):
    if args.json:
        print(json.dumps(serialize_data(result), sort_keys=True))
        return
    if args.command == "convergence" and not args.output:
        return
    for key, value in result.items():
        if key in ("records", "probes", "estimates", "std_errors", "reference"):
            continue
        print(f"{key}: {value}")


def main(argv=None):
    """
    Run the command line.

    :param argv: Argument list (defaults to sys.argv[1:]).
    :return: Exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        sections = _sections(args)
        result = args.handler(args, sections)
    except SceneError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ConfigFileError, UsageError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (PWoSError, OSError, ValueError) as e:
        harness_logger.error("%s failed: %s", args.command, e)
        print(f"error: {e}", file=sys.stderr)
        return 1
    _print_result(result, args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
