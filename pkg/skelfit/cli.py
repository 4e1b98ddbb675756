import sys
import time
from datetime import datetime
from pathlib import Path
from typing import Callable, List, Optional

import typer

try:  # typer >= 0.26 vendors its own click; catch the exceptions it actually raises
    from typer._click import exceptions as click_exceptions
except ImportError:
    from click import exceptions as click_exceptions

from skelfit import __version__
from skelfit._constant import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, METRIC_HEADER
from skelfit.config import config
from skelfit.exception import SkelfitException, ValidationException
from skelfit.log import add_run_file_handler, log, remove_run_file_handler
from skelfit.report_generator import ReportGenerator
from skelfit.thread_context import run_session
from skelfit.utils import configure_torch, load_env


app = typer.Typer(
    help="Fit articulated template shapes to silhouettes and optical flow, retarget and evaluate them.",
    add_completion=False,
    no_args_is_help=True,
)


@app.callback()
def main_options(
    env_file: Path = typer.Option(None, "--env", "-e", help="Path to .env file to load before running"),
):
    if env_file:
        if not env_file.exists():
            typer.secho(f"❌ Env file not found: {env_file}", fg=typer.colors.RED)
            raise typer.Exit(EXIT_VALIDATION)
        load_env(str(env_file))
    configure_torch()


def _execute(command: str, body: Callable[[], Optional[int]]) -> None:
    """
    Runs one command as a logged session: validation failures exit 1, everything else that
    goes wrong exits 2. ``body`` may return a nonzero status of its own.
    """
    run_id = f"{command}-{datetime.now().strftime('%Y%m%d_%H%M%S')}"
    with run_session(run_id, command=command):
        add_run_file_handler(run_id, config.get("log_dir", "logs"))
        try:
            status = body() or EXIT_OK
        except ValidationException as e:
            log.error(str(e))
            typer.secho(f"❌ {e}", fg=typer.colors.RED, err=True)
            status = EXIT_VALIDATION
        except SkelfitException as e:
            log.error(str(e))
            typer.secho(f"❌ {e}", fg=typer.colors.RED, err=True)
            status = EXIT_RUNTIME
        except Exception as e:
            log.error(f"{command} failed: {e}", exc_info=config.get_bool("debug", False))
            typer.secho(f"❌ {command} failed: {e}", fg=typer.colors.RED, err=True)
            status = EXIT_RUNTIME
        finally:
            remove_run_file_handler()
    if status != EXIT_OK:
        raise typer.Exit(status)


def _finalize_report(report: ReportGenerator, command: str, start: float) -> None:
    end = time.time()
    report.record_overview(command, end - start, start, end)
    run_dir = report.finalize(command)
    typer.secho(f"📄 Report written to {run_dir}", fg=typer.colors.GREEN, err=True)


@app.command()
def retrieve(
    index: Path = typer.Option(..., "--index", help="Index manifest (JSON)"),
    query: Path = typer.Option(..., "--query", help="Query embeddings (EMB1)"),
    k: int = typer.Option(5, "-k", "--k", help="Number of results"),
):
    """Rank template shapes by embedding distance to the query frames."""
    from skelfit.workbench import pipeline

    def body():
        for rank, (item_id, score) in enumerate(pipeline.retrieve(str(index), str(query), k), start=1):
            typer.echo(f"{rank}\t{item_id}\t{score:.9g}")

    _execute("retrieve", body)


@app.command()
def fit(
    shape: Path = typer.Option(..., "--shape", help="Template shape file"),
    obs: Path = typer.Option(..., "--obs", help="Observation directory"),
    out: Path = typer.Option(..., "--out", help="Fitted shape file to write"),
    config_path: Path = typer.Option(None, "--config", help="Settings document (JSON or YAML)"),
    report: bool = typer.Option(True, "--report/--no-report", help="Write an HTML/JSON run report"),
):
    """Fit shape variables and poses to an observation sequence."""
    from skelfit.workbench import pipeline

    def body():
        start = time.time()
        result = pipeline.run_fit(str(shape), str(obs), str(out), str(config_path) if config_path else None)
        final = result.final.as_dict()
        typer.echo(",".join(f"{key}={value:.9g}" for key, value in final.items()))
        typer.echo(f"history: {pipeline.history_path_for(str(out))}")
        if report:
            generator = ReportGenerator(title="skelfit fit")
            generator.record_history(out.stem, result.history_rows())
            generator.record_final(out.stem, result.final)
            _finalize_report(generator, "fit", start)
        if result.diverged:
            typer.secho("⚠️  Optimization diverged; best state so far was written", fg=typer.colors.YELLOW, err=True)
            return EXIT_RUNTIME

    _execute("fit", body)


@app.command()
def reanimate(
    shape: Path = typer.Option(..., "--shape", help="Fitted shape file"),
    target: Path = typer.Option(..., "--target", help="Target points (.npy, .obj or text)"),
    out: Path = typer.Option(..., "--out", help="Shape file with the retargeted pose"),
    config_path: Path = typer.Option(None, "--config", help="Settings document (JSON or YAML)"),
    playback: Path = typer.Option(None, "--playback", help="Directory for per-frame OBJ export"),
):
    """Retarget a fitted shape onto a target point set."""
    from skelfit.workbench import pipeline

    def body():
        result = pipeline.run_reanimate(
            str(shape), str(target), str(out),
            config_path=str(config_path) if config_path else None,
            playback_dir=str(playback) if playback else None,
        )
        typer.echo(f"chamfer={result.chamfer:.9g} initial={result.initial_chamfer:.9g} iterations={result.iterations}")
        if result.diverged:
            return EXIT_RUNTIME

    _execute("reanimate", body)


@app.command("eval")
def evaluate(
    pred: Path = typer.Option(..., "--pred", help="Predicted shape file"),
    gt: Path = typer.Option(..., "--gt", help="Reference shape file"),
    scale_search: bool = typer.Option(False, "--scale-search", help="Rescale the prediction to maximize IoU first"),
    resolution: int = typer.Option(64, "--resolution", help="Voxel grid resolution per axis"),
    config_path: Path = typer.Option(None, "--config", help="Settings document (JSON or YAML)"),
    report: bool = typer.Option(False, "--report/--no-report", help="Write an HTML/JSON run report"),
):
    """Print the metric row of a prediction against a reference shape."""
    from skelfit.workbench import pipeline

    def body():
        start = time.time()
        metrics = pipeline.evaluate(
            str(pred), str(gt), with_scale_search=scale_search, resolution=resolution,
            config_path=str(config_path) if config_path else None,
        )
        typer.echo(METRIC_HEADER)
        typer.echo(metrics.row())
        if report:
            generator = ReportGenerator(title="skelfit eval")
            generator.record_metrics(pred.stem, metrics)
            _finalize_report(generator, "eval", start)

    _execute("eval", body)


@app.command()
def synth(
    shape: Path = typer.Option(..., "--shape", help="Shape file (params optional)"),
    camera: Path = typer.Option(..., "--camera", help="Camera JSON"),
    out: Path = typer.Option(..., "--out", help="Observation directory to write"),
    poses: Path = typer.Option(None, "--poses", help="Pose sequence (defaults to the shape file's poses)"),
):
    """Render masks and flows of a posed shape into an observation directory."""
    from skelfit.workbench import pipeline

    def body():
        observations = pipeline.run_synth(str(shape), str(camera), str(out), str(poses) if poses else None)
        typer.echo(f"{observations.num_frames} frames {observations.width}x{observations.height} -> {out}")

    _execute("synth", body)


@app.command("create-template")
def create_template(
    kind: str = typer.Argument(..., help="tube, quadruped or cube"),
    out: Path = typer.Option(..., "--out", help="Shape file to write"),
    bones: int = typer.Option(3, "--bones", help="Bone count of the tube template"),
    frames: int = typer.Option(0, "--frames", help="Seeded pose frames to include"),
    max_angle: float = typer.Option(0.3, "--max-angle", help="Largest joint rotation in radians"),
    seed: int = typer.Option(0, "--seed", help="Pose seed (CASA_SEED wins when set)"),
    distance: float = typer.Option(0.0, "--distance", help="Root offset along +z"),
):
    """Write a procedural template shape file, optionally with a pose sequence."""
    from skelfit.workbench import pipeline

    def body():
        override = config.seed_override()
        written = pipeline.create_template(
            kind, str(out), num_bones=bones, num_frames=frames, max_angle=max_angle,
            seed=override if override is not None else seed, distance=distance,
        )
        typer.echo(f"{kind}: {written.shape.num_bones} bones, {written.shape.mesh.num_vertices} vertices -> {out}")

    _execute("create-template", body)


@app.command()
def gradcheck(
    seed: int = typer.Option(0, "--seed", help="Seed of the first scene"),
    scenes: int = typer.Option(10, "--scenes", help="Number of seeded scenes"),
    samples: int = typer.Option(3, "--samples", help="Sampled components per variable class"),
    report: bool = typer.Option(False, "--report/--no-report", help="Write JUnit/HTML results"),
):
    """Compare analytic energy gradients against central finite differences."""
    from skelfit.workbench import pipeline

    def body():
        start = time.time()
        result = pipeline.run_gradient_suite(seed, scenes, samples)
        for case in result.failures:
            typer.echo(f"FAIL {case.name}: analytic {case.analytic:.9g} numeric {case.numeric:.9g}")
        typer.echo(f"{len(result.cases)} cases, {len(result.failures)} failed")
        if report:
            generator = ReportGenerator(title="skelfit gradcheck")
            generator.record_gradcheck(result)
            _finalize_report(generator, "gradcheck", start)
        return EXIT_OK if result.passed else EXIT_RUNTIME

    _execute("gradcheck", body)


@app.command()
def batch(
    collection: Path = typer.Argument(..., help="YAML job collection"),
    report: bool = typer.Option(True, "--report/--no-report", help="Write an HTML/JSON/JUnit run report"),
):
    """Run a YAML collection of pipeline jobs, sequentially or in parallel."""
    from skelfit.runner import Runner

    def body():
        start = time.time()
        generator = ReportGenerator(title=f"skelfit batch {collection.name}") if report else None
        results = Runner(generator).run_collection(str(collection))
        for result in results:
            typer.echo(f"{result.status.upper():8}{result.kind:10}{result.name}")
        if generator is not None:
            _finalize_report(generator, "batch", start)
        return EXIT_RUNTIME if any(r.status == "failed" for r in results) else EXIT_OK

    _execute("batch", body)


@app.command()
def version():
    """Print the package version."""
    typer.echo(__version__)


def run(argv: Optional[List[str]] = None) -> int:
    """Exit status of one invocation: 0 ok, 1 usage or validation error, 2 runtime failure"""
    try:
        result = app(args=argv, prog_name="skelfit", standalone_mode=False)
    except click_exceptions.Exit as e:
        return e.exit_code
    except click_exceptions.Abort:
        return EXIT_VALIDATION
    except click_exceptions.ClickException as e:
        e.show()
        return EXIT_VALIDATION
    return result if isinstance(result, int) else EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
