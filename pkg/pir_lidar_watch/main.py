import contextlib
import csv
import hashlib
import json
import sys
from collections.abc import Iterator
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import TYPE_CHECKING, Annotated, Any, Optional

import typer
from loguru import logger
from pydantic import BaseModel, ValidationError

from pir_lidar_watch._dataclasses import AlertEnvelope, OccupancyState, SensorSample, Trace
from pir_lidar_watch.detector import Detector, check_trace, run_trace
from pir_lidar_watch.event_log import EventLog
from pir_lidar_watch.exceptions import DeliveryError, PirLidarWatchError
from pir_lidar_watch.frame_codec import decode_stream
from pir_lidar_watch.oracle import VERIFY_CONFIG, check_seed
from pir_lidar_watch.outcomes import golden_problems
from pir_lidar_watch.send_alerts import AlertEmitter, EmitterConfig, parse_endpoint
from pir_lidar_watch.settings import PipelineConfig, load_pipeline_config
from pir_lidar_watch.simulator import (
    BuiltinScenario,
    NoiseModel,
    builtin_scenario,
    load_scenario_file,
    synthesize,
)
from pir_lidar_watch.summary import summarize_visits
from pir_lidar_watch.trace import read_trace_csv, write_trace_csv

if TYPE_CHECKING:
    from _csv import _writer

    from pir_lidar_watch._dataclasses import DetectionEvent

EXIT_FAILED: int = 1
EXIT_BAD_INPUT: int = 2
ALERT_EXIT_CODE: int = 3
EXIT_ALERT_UNDELIVERED: int = 4

ANNOTATED_CSV_HEADER: list[str] = [
    "t_ms",
    "pir",
    "distance_cm",
    "valid",
    "motion",
    "filtered_cm",
    "stable",
    "ms_since_motion",
    "lidar_stale",
    "state",
]

app = typer.Typer(
    name="pir-lidar-watch",
    help="Bathroom occupancy and emergency detection from PIR and LiDAR traces.",
    no_args_is_help=True,
    add_completion=False,
)


def configure_logging(level: str) -> None:
    log_format: str = "<green>{time:YYYY-MM-DD at HH:mm:ss}</green> <level>{level: <5}</level> <white>{message}</white>"
    logger.remove()
    logger.add(
        sys.stderr,
        format=log_format,
        level=level,
        colorize=True,
        backtrace=False,
        diagnose=False,
        catch=True,
    )


def get_tool_version() -> str:
    try:
        return version("pir-lidar-watch")
    except PackageNotFoundError:
        return "unknown"


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class RunManifest(BaseModel):
    """Everything needed to reproduce a run bit for bit. No wall clock on purpose."""

    tool_version: str
    command: str
    scenario: str
    config: PipelineConfig
    period_ms: int
    seeds: list[int]
    input_digests: dict[str, str]
    output_digests: dict[str, str]
    trace_metadata: dict[str, Any]

    def write(self: "RunManifest", path: Path) -> None:
        text: str = json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)
        path.write_text(text + "\n", encoding="utf-8", newline="\n")


@app.callback()
def main(
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Log debug messages.")] = False,
    quiet: Annotated[bool, typer.Option("--quiet", "-q", help="Only log warnings and errors.")] = False,
) -> None:
    """Decode, simulate, replay and verify PIR + LiDAR traces."""
    level: str = "DEBUG" if verbose else "WARNING" if quiet else "INFO"
    configure_logging(level)


def _load_config(path: Path | None) -> PipelineConfig:
    try:
        return load_pipeline_config(path)
    except (OSError, ValidationError) as e:
        logger.error("Invalid config: {}", e)
        raise typer.Exit(EXIT_BAD_INPUT) from None


@app.command()
def decode(
    raw: Annotated[Path, typer.Argument(help="Raw UART capture from the LiDAR.")],
    out: Annotated[Path, typer.Argument(help="Trace CSV to write.")],
    period_ms: Annotated[int, typer.Option(min=1, help="Sampling period of the capture.")] = 50,
) -> None:
    """Decode a TF-Luna capture into a LiDAR-only trace."""
    try:
        data: bytes = raw.read_bytes()
    except OSError as e:
        logger.error("Could not read {}: {}", raw, e)
        raise typer.Exit(EXIT_BAD_INPUT) from None

    frames, stats = decode_stream(data)

    # Frames with a bad checksum keep their tick but carry no distance
    samples = tuple(
        SensorSample.from_reading(index * period_ms, False, frame.distance_cm if frame.checksum_ok else None)
        for index, frame in enumerate(frames)
    )
    write_trace_csv(Trace(samples=samples, nominal_period_ms=period_ms), out)

    if samples:
        logger.warning("The capture has no PIR channel, the pir column is all zeros")
    typer.echo(
        f"frames_ok={stats.frames_ok} frames_bad_checksum={stats.frames_bad_checksum}"
        f" bytes_skipped_resync={stats.bytes_skipped_resync}",
    )


@app.command()
def simulate(  # noqa: PLR0913
    out: Annotated[Path, typer.Option("--out", "-o", help="Trace CSV to write.")],
    scenario: Annotated[Optional[Path], typer.Argument(help="Scenario JSON file.")] = None,  # noqa: UP007
    builtin: Annotated[Optional[BuiltinScenario], typer.Option(help="Built-in experiment.")] = None,  # noqa: UP007
    seed: Annotated[Optional[int], typer.Option(min=0, help="RNG seed, overrides the file.")] = None,  # noqa: UP007
    period_ms: Annotated[int, typer.Option(min=1, help="Sampling period for built-ins.")] = 50,
    config: Annotated[Optional[Path], typer.Option(help="Pipeline config for the manifest.")] = None,  # noqa: UP007
) -> None:
    """Synthesize a trace from a scenario file or a built-in experiment."""
    if (scenario is None) == (builtin is None):
        msg: str = "Give either a SCENARIO file or --builtin, not both"
        raise typer.BadParameter(msg)

    pipeline: PipelineConfig = _load_config(config)
    input_digests: dict[str, str] = {}

    if builtin is not None:
        script = builtin_scenario(builtin)
        noise = NoiseModel.silent(seed or 0)
        scenario_name: str = builtin.value
    else:
        try:
            scenario_file = load_scenario_file(scenario)
        except (OSError, ValueError) as e:
            # pydantic.ValidationError names the failing field, e.g. segments.2.distance
            logger.error("Invalid scenario {}: {}", scenario, e)
            raise typer.Exit(EXIT_BAD_INPUT) from None

        script = scenario_file.script
        noise = scenario_file.noise if seed is None else scenario_file.noise.model_copy(update={"rng_seed": seed})
        period_ms = scenario_file.period_ms
        scenario_name = scenario.name
        input_digests[scenario.name] = sha256_file(scenario)

    trace = synthesize(script, noise, period_ms)
    write_trace_csv(trace, out)

    manifest = RunManifest(
        tool_version=get_tool_version(),
        command="simulate",
        scenario=scenario_name,
        config=pipeline,
        period_ms=period_ms,
        seeds=[noise.rng_seed],
        input_digests=input_digests,
        output_digests={out.name: sha256_file(out)},
        trace_metadata=trace.metadata,
    )
    manifest.write(out.with_name(out.name + ".manifest.json"))
    logger.info("Wrote {} samples ({} ms) to {}", len(trace), script.duration_ms, out)


@contextlib.contextmanager
def _annotated_writer(path: Path | None) -> "Iterator[_writer | None]":
    if path is None:
        yield None
        return
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ANNOTATED_CSV_HEADER)
        yield writer


@app.command()
def replay(  # noqa: C901, PLR0912, PLR0913, PLR0915
    trace_path: Annotated[Path, typer.Argument(metavar="TRACE", help="Trace CSV to replay.")],
    config: Annotated[Optional[Path], typer.Option(help="Pipeline config JSON.")] = None,  # noqa: UP007
    events: Annotated[Optional[Path], typer.Option(help="Write events as JSON lines.")] = None,  # noqa: UP007
    annotated: Annotated[Optional[Path], typer.Option(help="Write the annotated CSV.")] = None,  # noqa: UP007
    summary: Annotated[bool, typer.Option(help="Print one line per visit.")] = False,
    source_id: Annotated[str, typer.Option(help="Sensor or room id in the envelopes.")] = "room-1",
    alert_endpoint: Annotated[
        Optional[str],  # noqa: UP007
        typer.Option(metavar="HOST:PORT", help="Send every event to this TCP endpoint."),
    ] = None,
    delivery_timeout_s: Annotated[float, typer.Option(help="How long to wait for delivery at the end.")] = 60.0,
) -> None:
    """Replay a trace through the detector.

    Exits with 3 when an ALERT was raised, 4 when events could not be delivered.
    """
    pipeline: PipelineConfig = _load_config(config)

    endpoint: tuple[str, int] | None = None
    if alert_endpoint is not None:
        try:
            endpoint = parse_endpoint(alert_endpoint)
        except ValueError as e:
            raise typer.BadParameter(str(e), param_hint="--alert-endpoint") from None

    try:
        trace = read_trace_csv(trace_path)
        check_trace(trace)
    except (OSError, PirLidarWatchError) as e:
        logger.error("Could not replay {}: {}", trace_path, e)
        raise typer.Exit(EXIT_BAD_INPUT) from None

    detector = Detector(pipeline.detector, pipeline.conditioning)
    all_events: list[DetectionEvent] = []

    event_log: EventLog | None = None
    if events is not None:
        try:
            # Every replay starts a fresh log
            events.unlink(missing_ok=True)
            event_log = EventLog(events, source_id)
        except (OSError, PirLidarWatchError) as e:
            logger.error("Could not open event log {}: {}", events, e)
            raise typer.Exit(EXIT_BAD_INPUT) from None
    emitter: AlertEmitter | None = AlertEmitter(endpoint, EmitterConfig()) if endpoint is not None else None

    try:
        with _annotated_writer(annotated) as writer:
            for sample in trace.samples:
                cs, tick_events = detector.feed(sample)
                for event in tick_events:
                    if event_log is not None:
                        envelope = event_log.append_event(event)
                    else:
                        envelope = AlertEnvelope(event, source_id, emitted_at=event.t_ms, sequence=len(all_events))
                        typer.echo(json.dumps(event.to_dict(), separators=(",", ":")))
                    if emitter is not None:
                        emitter.submit(envelope)
                    all_events.append(event)

                if writer is not None:
                    writer.writerow(
                        [
                            sample.t_ms,
                            int(sample.pir),
                            "" if sample.distance_cm is None else sample.distance_cm,
                            int(sample.distance_valid),
                            int(cs.motion),
                            "" if cs.distance_cm is None else cs.distance_cm,
                            int(cs.stable),
                            cs.ms_since_motion,
                            int(cs.lidar_stale),
                            detector.state.value,
                        ],
                    )
    finally:
        if event_log is not None:
            event_log.close()

    if summary:
        end_ms: int | None = trace.samples[-1].t_ms if trace.samples else None
        for visit in summarize_visits(all_events, end_ms):
            end: str = "open" if visit.end_ms is None else f"{visit.end_ms}ms"
            typer.echo(
                f"visit {visit.start_ms}ms-{end} seated={visit.seated_ms}ms warned={visit.warned}"
                f" fall_suspected={visit.fall_suspected} outcome={visit.outcome}",
            )

    alerts: int = sum(event.to_state == OccupancyState.ALERT for event in all_events)
    logger.info("{} events, {} alert(s), final state {}", len(all_events), alerts, detector.state)

    if emitter is not None:
        try:
            emitter.close(timeout=delivery_timeout_s)
        except DeliveryError as e:
            logger.error("{}", e)
            raise typer.Exit(EXIT_ALERT_UNDELIVERED) from None

    if alerts:
        raise typer.Exit(ALERT_EXIT_CODE)


@app.command()
def verify(
    seeds: Annotated[int, typer.Option(min=0, help="How many random scenarios to check.")] = 1000,
    break_hysteresis: Annotated[bool, typer.Option(hidden=True)] = False,
) -> None:
    """Check the detector against the reference interpreter on random scenarios."""
    if seeds == 0:
        logger.warning("Zero seeds, nothing was checked")
        return

    detector_config = VERIFY_CONFIG
    if break_hysteresis:
        logger.warning("Running the detector without hysteresis, it should diverge")
        detector_config = VERIFY_CONFIG.model_copy(update={"hysteresis_cm": 0})

    for seed in range(seeds):
        divergence = check_seed(seed, VERIFY_CONFIG, detector_config)
        if divergence is not None:
            typer.echo(f"seed {seed}: {divergence.describe()}")
            raise typer.Exit(EXIT_FAILED)
        if (seed + 1) % 100 == 0:
            logger.info("{} of {} seeds agree", seed + 1, seeds)

    typer.echo(f"{seeds} seeds, no divergence")


@app.command()
def robustness(
    runs: Annotated[int, typer.Option(min=1, help="Seeds per experiment.")] = 100,
    sigma: Annotated[float, typer.Option(min=0.0, help="Distance noise in cm.")] = 2.0,
    dropout: Annotated[float, typer.Option(min=0.0, max=1.0, help="Probability of a missed reading.")] = 0.01,
    bar: Annotated[float, typer.Option(min=0.0, max=1.0, help="Share of runs that must pass.")] = 0.95,
) -> None:
    """Replay the five experiments with sensor noise and count how often they still come out right."""
    failed: bool = False
    for scenario in BuiltinScenario:
        script = builtin_scenario(scenario)
        passed: int = 0
        for seed in range(runs):
            trace = synthesize(script, NoiseModel(distance_sigma_cm=sigma, dropout_prob=dropout, rng_seed=seed))
            problems = golden_problems(scenario, trace, run_trace(trace))
            if problems:
                logger.debug("{} seed {}: {}", scenario, seed, "; ".join(problems))
            else:
                passed += 1

        ok: bool = passed >= bar * runs
        failed = failed or not ok
        typer.echo(f"{scenario}: {passed}/{runs} {'ok' if ok else 'FAILED'}")

    if failed:
        raise typer.Exit(EXIT_FAILED)


def start() -> None:
    """Run the command line interface."""
    app()


if __name__ == "__main__":
    start()
