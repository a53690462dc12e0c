"""Command-line frontend.

Exit status 0 on success, 1 when a checked property does not hold (a table is
not t-close, a verification report failed), 2 on usage, input or IO errors.
JSON goes to stdout or to ``--output``; diagnostics go to stderr.

Schema sidecar format::

    # comment
    <column>.role=quasi_identifier|confidential
    <column>.kind=numeric|ordinal|categorical
    <column>.bounds=<lo>,<hi>
    <column>.order=<v1>,<v2>,...
"""

import json
import sys
from pathlib import Path
from typing import Any, Literal, Optional

import typer
from loguru import logger
from pydantic import BaseModel, ValidationError, field_validator, model_validator

from .closeness import check_stochastic_t_closeness, check_t_closeness, check_t_closeness_per_attribute
from .config import AppConfig, SweepConfig, get_config, load_schema, load_sweep_config, render_schema
from .construct import anonymize_t_close
from .dataset import atomic_write_text, load_dataset, save_dataset
from .dpbridge import anonymize_dp, dp_to_t_bound, t_to_eps
from .exceptions import TCloseError
from .models import AnonymizedDataset, StochasticMechanismSpec, jsonable
from .oracle import reports_to_jsonl, run_sweep

LOG_FORMAT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {name}:{function}:{line} - {message}"
DEFAULT_SWEEP = Path(__file__).parent.parent / "fixtures" / "sweep.json"

EXIT_OK = 0
EXIT_VIOLATED = 1
EXIT_ERROR = 2

Command = Literal["check", "anonymize-tclose", "anonymize-dp", "bound", "verify"]

REQUIRED: dict[str, tuple[str, ...]] = {
    "check": ("input", "schema_file", "t"),
    "anonymize-tclose": ("input", "schema_file", "conf", "t", "output"),
    "anonymize-dp": ("input", "schema_file", "k", "epsilon", "output"),
    "bound": ("direction",),
    "verify": (),
}


class RunConfig(BaseModel):
    """Everything one command invocation needs."""

    command: Command
    input: Optional[Path] = None
    schema_file: Optional[Path] = None
    output: Optional[Path] = None
    conf: Optional[list[str]] = None
    t: Optional[float] = None
    l: int = 1
    k: Optional[int] = None
    epsilon: Optional[float] = None
    seed: int = 0
    grid_resolution: Optional[int] = None
    strategy: Optional[str] = None
    laplace_scale: Optional[float] = None
    per_attribute: bool = False
    split: Literal["equal", "none"] = "equal"
    direction: Optional[Literal["dp_to_t", "t_to_eps"]] = None
    n: Optional[int] = None
    classes: Optional[list[int]] = None
    statement_coefficient: bool = False
    sweep: Optional[Path] = None
    append: bool = False
    with_timing: bool = False
    jobs: Optional[int] = None
    config_path: Optional[Path] = None

    @field_validator("conf", "classes", mode="before")
    @classmethod
    def split_commas(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [part.strip() for part in value.split(",") if part.strip()]
        return value

    @model_validator(mode="after")
    def check_required(self) -> "RunConfig":
        missing = [name for name in REQUIRED[self.command] if getattr(self, name) is None]
        if self.command == "bound":
            needed = ("n", "classes", "epsilon") if self.direction == "dp_to_t" else ("t",)
            missing += [name for name in needed if getattr(self, name) is None]
        if missing:
            raise ValueError(f"'{self.command}' needs {', '.join('--' + m.replace('_', '-') for m in missing)}")
        if self.command == "check" and self.laplace_scale is not None and self.conf and len(self.conf) != 1:
            raise ValueError("a stochastic check takes exactly one --conf column")
        return self


def _configure_logging(level: str) -> None:
    logger.remove()
    logger.add(sys.stderr, format=LOG_FORMAT, level=level.upper())


def _dump(payload: Any) -> str:
    return json.dumps(jsonable(payload), indent=2, ensure_ascii=False) + "\n"


def _emit(text: str, output: Optional[Path]) -> None:
    if output is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        atomic_write_text(output, text)


def _write_release(release: AnonymizedDataset, output: Path) -> None:
    save_dataset(release.data, output)
    atomic_write_text(output.with_suffix(".schema"), render_schema(release.data.schema))
    atomic_write_text(output.with_suffix(".json"), _dump(release.sidecar()))
    logger.info(f"Release written to {output}")


def _check(config: RunConfig, settings: AppConfig) -> int:
    data = load_dataset(config.input, load_schema(config.schema_file))
    conf = config.conf or [attr.name for attr in data.confidential]

    if config.laplace_scale is not None:
        mech = StochasticMechanismSpec(scale=config.laplace_scale, column=conf[0])
        report = check_stochastic_t_closeness(
            data,
            mech,
            config.t,
            grid_resolution=config.grid_resolution or settings.grid_resolution,
            jobs=config.jobs or settings.jobs,
            tail_scales=settings.grid_tail_scales,
        )
        reports = [report]
    elif config.per_attribute:
        reports = check_t_closeness_per_attribute(data, conf, config.t)
    else:
        reports = [check_t_closeness(data, conf, config.t)]

    if len(reports) == 1:
        payload = reports[0].to_dict()
    else:
        payload = {"mode": "per_attribute", "satisfied": all(r.satisfied for r in reports)}
        payload["reports"] = [r.to_dict() for r in reports]
    _emit(_dump(payload), config.output)
    return EXIT_OK if all(r.satisfied for r in reports) else EXIT_VIOLATED


def _anonymize_tclose(config: RunConfig, settings: AppConfig) -> int:
    if len(config.conf) != 1:
        raise TCloseError("anonymize-tclose bucketizes exactly one --conf column")
    if not float(config.t).is_integer():
        raise TCloseError(f"the construction needs an integer --t, got {config.t}")
    data = load_dataset(config.input, load_schema(config.schema_file))
    release = anonymize_t_close(data, config.conf[0], int(config.t), config.l, config.strategy or settings.qi_strategy)
    _write_release(release, config.output)
    summary = {"output": str(config.output), "k": release.partition.k, "certificate": release.certificate.to_dict()}
    sys.stdout.write(_dump(summary))
    return EXIT_OK


def _anonymize_dp(config: RunConfig, settings: AppConfig) -> int:
    data = load_dataset(config.input, load_schema(config.schema_file))
    release = anonymize_dp(data, config.k, config.epsilon, config.seed, config.conf, config.split)
    _write_release(release, config.output)
    summary = {"output": str(config.output), "k": release.partition.k, "bound": release.bound.to_dict()}
    sys.stdout.write(_dump(summary))
    return EXIT_OK


def _bound(config: RunConfig, settings: AppConfig) -> int:
    if config.direction == "dp_to_t":
        coefficient = "statement" if config.statement_coefficient else "proof"
        certificate = dp_to_t_bound(config.n, config.classes, config.epsilon, coefficient)
    else:
        certificate = t_to_eps(config.t)
    _emit(_dump(certificate.to_dict()), config.output)
    return EXIT_OK


def _verify(config: RunConfig, settings: AppConfig) -> int:
    if config.sweep is not None:
        sweep = load_sweep_config(config.sweep)
    elif DEFAULT_SWEEP.exists():
        sweep = load_sweep_config(DEFAULT_SWEEP)
    else:
        sweep = SweepConfig()
    if "tolerance" not in sweep.model_fields_set:
        sweep = sweep.model_copy(update={"tolerance": settings.tolerance})
    if config.grid_resolution is not None:
        sweep = sweep.model_copy(update={"grid_resolution": config.grid_resolution})

    reports = run_sweep(sweep, jobs=config.jobs or settings.jobs)
    text = reports_to_jsonl(reports, config.with_timing)
    if config.output is not None and config.append and config.output.exists():
        text = config.output.read_text(encoding="utf-8") + text
    _emit(text, config.output)
    return EXIT_OK if all(report.passed for report in reports) else EXIT_VIOLATED


HANDLERS = {
    "check": _check,
    "anonymize-tclose": _anonymize_tclose,
    "anonymize-dp": _anonymize_dp,
    "bound": _bound,
    "verify": _verify,
}


def run(config: RunConfig) -> int:
    """Execute one command and return its exit status."""
    try:
        settings = get_config(config.config_path)
        return HANDLERS[config.command](config, settings)
    except (TCloseError, OSError, ValidationError) as e:
        logger.debug(f"{config.command} failed: {e!r}")
        typer.echo(f"error: {e}", err=True)
        return EXIT_ERROR


app = typer.Typer(add_completion=False, help="t-closeness checks, releases and differential-privacy bounds.")


def _invoke(log_level: Optional[str], **options: Any) -> None:
    level = log_level
    if level is None:
        try:
            level = get_config(options.get("config_path")).log_level
        except (TCloseError, OSError):
            level = AppConfig().log_level
    _configure_logging(level)
    try:
        config = RunConfig(**options)
    except ValidationError as e:
        typer.echo(f"error: {e.errors()[0]['msg']}", err=True)
        raise typer.Exit(EXIT_ERROR)
    raise typer.Exit(run(config))


LogLevel = typer.Option(None, "--log-level", help="DEBUG, INFO, WARNING or ERROR (default from settings)")
ConfigPath = typer.Option(None, "--config", help="Settings file (default: config_private.json, then config.json)")
Jobs = typer.Option(None, "--jobs", help="Worker threads for grid computations")


@app.command("check")
def check_command(
    input: Path = typer.Option(..., "--input", help="CSV file with a header row"),
    schema: Path = typer.Option(..., "--schema", help="Schema sidecar"),
    t: float = typer.Option(..., "--t", help="Closeness level, any real ≥ 1"),
    conf: Optional[str] = typer.Option(None, "--conf", help="Comma-separated confidential columns (default: all)"),
    per_attribute: bool = typer.Option(False, "--per-attribute", help="One report per confidential column"),
    laplace_scale: Optional[float] = typer.Option(None, "--laplace-scale", help="Check Laplace outputs instead"),
    grid_resolution: Optional[int] = typer.Option(None, "--grid-resolution"),
    output: Optional[Path] = typer.Option(None, "--output", help="Write the report here instead of stdout"),
    jobs: Optional[int] = Jobs,
    log_level: Optional[str] = LogLevel,
    config: Optional[Path] = ConfigPath,
):
    """Check t-closeness of a table; exit 1 when it does not hold."""
    _invoke(
        log_level,
        command="check",
        input=input,
        schema_file=schema,
        t=t,
        conf=conf,
        per_attribute=per_attribute,
        laplace_scale=laplace_scale,
        grid_resolution=grid_resolution,
        output=output,
        jobs=jobs,
        config_path=config,
    )


@app.command("anonymize-tclose")
def anonymize_tclose_command(
    input: Path = typer.Option(..., "--input"),
    schema: Path = typer.Option(..., "--schema"),
    conf: str = typer.Option(..., "--conf", help="Confidential column to bucketize"),
    t: float = typer.Option(..., "--t", help="Integer closeness level"),
    output: Path = typer.Option(..., "--output", help="Release CSV; .schema and .json sidecars go next to it"),
    l: int = typer.Option(1, "--l", help="Classes per emphasized bucket"),
    strategy: Optional[str] = typer.Option(None, "--strategy", help="greedy-seed or sorted-scan"),
    log_level: Optional[str] = LogLevel,
    config: Optional[Path] = ConfigPath,
):
    """Build a k-anonymous t-close release by bucketization."""
    _invoke(
        log_level,
        command="anonymize-tclose",
        input=input,
        schema_file=schema,
        conf=conf,
        t=t,
        output=output,
        l=l,
        strategy=strategy,
        config_path=config,
    )


@app.command("anonymize-dp")
def anonymize_dp_command(
    input: Path = typer.Option(..., "--input"),
    schema: Path = typer.Option(..., "--schema"),
    k: int = typer.Option(..., "--k", help="Minimum class size"),
    epsilon: float = typer.Option(..., "--epsilon", help="Total privacy budget"),
    output: Path = typer.Option(..., "--output"),
    seed: int = typer.Option(0, "--seed"),
    conf: Optional[str] = typer.Option(None, "--conf", help="Columns to perturb (default: all confidential)"),
    split: str = typer.Option("equal", "--split", help="equal: ε/m per column; none: ε per column"),
    log_level: Optional[str] = LogLevel,
    config: Optional[Path] = ConfigPath,
):
    """Microaggregate QIs and add Laplace noise to confidential columns."""
    _invoke(
        log_level,
        command="anonymize-dp",
        input=input,
        schema_file=schema,
        k=k,
        epsilon=epsilon,
        output=output,
        seed=seed,
        conf=conf,
        split=split,
        config_path=config,
    )


@app.command("bound")
def bound_command(
    dp_to_t: bool = typer.Option(False, "--dp-to-t", help="t implied by class sizes and ε"),
    t_to_eps_flag: bool = typer.Option(False, "--t-to-eps", help="ε implied by exp(ε/2)-closeness"),
    n: Optional[int] = typer.Option(None, "--n"),
    classes: Optional[str] = typer.Option(None, "--classes", help="Comma-separated class sizes"),
    epsilon: Optional[float] = typer.Option(None, "--epsilon"),
    t: Optional[float] = typer.Option(None, "--t"),
    statement_coefficient: bool = typer.Option(False, "--statement-coefficient", help="Use (N-|E|-1)/|E|"),
    output: Optional[Path] = typer.Option(None, "--output"),
    log_level: Optional[str] = LogLevel,
    config: Optional[Path] = ConfigPath,
):
    """Print a bound certificate."""
    if dp_to_t == t_to_eps_flag:
        typer.echo("error: give exactly one of --dp-to-t and --t-to-eps", err=True)
        raise typer.Exit(EXIT_ERROR)
    _invoke(
        log_level,
        command="bound",
        direction="dp_to_t" if dp_to_t else "t_to_eps",
        n=n,
        classes=classes,
        epsilon=epsilon,
        t=t,
        statement_coefficient=statement_coefficient,
        output=output,
        config_path=config,
    )


@app.command("verify")
def verify_command(
    sweep: Optional[Path] = typer.Option(None, "--sweep", help="Sweep matrix (default: fixtures/sweep.json)"),
    output: Optional[Path] = typer.Option(None, "--output", help="JSON-lines file (default: stdout)"),
    append: bool = typer.Option(False, "--append", help="Keep the lines already in --output"),
    with_timing: bool = typer.Option(False, "--with-timing", help="Include runtimes in the reports"),
    grid_resolution: Optional[int] = typer.Option(None, "--grid-resolution"),
    jobs: Optional[int] = Jobs,
    log_level: Optional[str] = LogLevel,
    config: Optional[Path] = ConfigPath,
):
    """Run the verification sweep and emit one JSON report per line."""
    _invoke(
        log_level,
        command="verify",
        sweep=sweep,
        output=output,
        append=append,
        with_timing=with_timing,
        grid_resolution=grid_resolution,
        jobs=jobs,
        config_path=config,
    )


def main():
    app()


if __name__ == "__main__":
    main()
