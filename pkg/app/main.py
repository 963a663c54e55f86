import logging
import math
import sys
from typing import Literal

import click
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.config import DEFAULT_ALPHA, DEFAULT_N, DEFAULT_SEED, LOG_LEVEL, load_config_file
from app.coulomb_decomp import SplitPotential
from app.errors import CondensationError, JelliumError
from app.exchange import build_gamma_tilde_profile, exchange_integral_momentum, profile_exchange_integral, two_term_free_energy
from app.parallel import ordered_map
from app.reports import to_json
from app.statmech_core import Statistics, critical_density, solve_fugacity
from app.suites.manager import SUITES, run_suites

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["rho", "beta", "z", "f0", "exchange", "total", "f0_reduced", "exchange_reduced", "status"]
USAGE_EXIT = 64

stats_option = click.option(
    "--stats", type=click.Choice([s.value for s in Statistics]), default=Statistics.FERMI.value, show_default=True
)
n_option = click.option("--n", type=click.IntRange(min=1), default=DEFAULT_N, show_default=True, help="Internal degrees of freedom.")


class ScanConfig(BaseModel):
    """A density sweep at fixed β or at fixed βρ^{2/3} (theta)."""

    model_config = ConfigDict(frozen=True)

    stats: Statistics = Statistics.FERMI
    n: int = Field(default=1, ge=1)
    rho_min: float = Field(gt=0)
    rho_max: float = Field(gt=0)
    points: int = Field(default=9, ge=1)
    theta: float | None = Field(default=None, gt=0)
    beta: float | None = Field(default=None, gt=0)
    alpha: float = Field(default=0.1, ge=0)
    output: str | None = None
    format: Literal["csv", "json"] = "csv"

    @model_validator(mode="after")
    def _check_mode(self):
        if (self.theta is None) == (self.beta is None):
            raise ValueError("exactly one of theta (fixed beta*rho^(2/3)) or beta (fixed beta) is required")
        if self.rho_min > self.rho_max:
            raise ValueError("rho_min must not exceed rho_max")
        return self

    def grid(self) -> list[tuple[float, float]]:
        """(rho, beta) per row."""
        rhos = np.geomspace(self.rho_min, self.rho_max, self.points) if self.points > 1 else np.array([self.rho_min])
        if self.theta is not None:
            return [(float(rho), self.theta * float(rho) ** (-2.0 / 3.0)) for rho in rhos]
        return [(float(rho), self.beta) for rho in rhos]


def check_condensation(config: ScanConfig) -> None:
    if config.stats is not Statistics.BOSE:
        return
    for rho, beta in config.grid():
        rho_c = critical_density(beta, config.n)
        if rho >= rho_c:
            raise CondensationError(rho, rho_c)


def _scan_row(config: ScanConfig, rho: float, beta: float) -> dict:
    try:
        result = two_term_free_energy(beta, rho, config.alpha, config.n, config.stats)
    except JelliumError as e:
        logger.error(f"❌ Scan point rho={rho:.6g}, beta={beta:.6g} failed: {e}")
        row = {key: math.nan for key in CSV_COLUMNS}
        row.update(rho=rho, beta=beta, status=f"error: {e}")
        return row
    return {
        "rho": rho,
        "beta": beta,
        "z": result.state.z,
        "f0": result.f0,
        "exchange": result.exchange_term,
        "total": result.total,
        "f0_reduced": result.f0 / rho ** (5.0 / 3.0),
        "exchange_reduced": result.exchange_term / rho ** (4.0 / 3.0),
        "status": "ok",
    }


def _emit(text: str, output: str | None) -> None:
    if output:
        with open(output, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        logger.info(f"✅ Wrote {output}")
    else:
        click.echo(text, nl=False)


def _record(fields: dict) -> None:
    for key, value in fields.items():
        click.echo(f"{key} = {value:.12g}" if isinstance(value, float) else f"{key} = {value}")


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="key = value defaults file.")
@click.pass_context
def cli(ctx, config_path):
    """Free energy of the dilute high-temperature jellium and its verification suites."""
    if config_path:
        values = load_config_file(config_path)
        ctx.default_map = {name: values for name in ctx.command.commands}


@cli.command("free-energy")
@click.option("--beta", type=float, required=True)
@click.option("--rho", type=float, required=True)
@click.option("--alpha", type=float, default=DEFAULT_ALPHA, show_default=True)
@n_option
@stats_option
def free_energy(beta, rho, alpha, n, stats):
    """Print f₀, the exchange term and their sum."""
    result = two_term_free_energy(beta, rho, alpha, n, Statistics(stats))
    fields = {
        "stats": stats,
        "beta": beta,
        "rho": rho,
        "alpha": alpha,
        "z": result.state.z,
        "mu": result.state.mu,
        "f0": result.f0,
        "exchange": result.exchange_term,
        "total": result.total,
    }
    if result.state.stats is Statistics.BOSE:
        fields["rho_c"] = critical_density(beta, n)
    _record(fields)
    return 0


@cli.command()
@stats_option
@n_option
@click.option("--rho-min", type=float, required=True)
@click.option("--rho-max", type=float, required=True)
@click.option("--points", type=click.IntRange(min=1), default=9, show_default=True)
@click.option("--theta", type=float, default=None, help="Hold beta*rho^(2/3) fixed.")
@click.option("--beta", type=float, default=None, help="Hold beta fixed.")
@click.option("--alpha", type=float, default=DEFAULT_ALPHA, show_default=True)
@click.option("--out", "output", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@click.option("--workers", type=click.IntRange(min=1), default=None)
def scan(stats, n, rho_min, rho_max, points, theta, beta, alpha, output, fmt, workers):
    """Tabulate the two-term expansion over a geometric density grid."""
    try:
        config = ScanConfig(
            stats=stats, n=n, rho_min=rho_min, rho_max=rho_max, points=points,
            theta=theta, beta=beta, alpha=alpha, output=output, format=fmt,
        )
    except ValidationError as e:
        raise click.UsageError(str(e)) from e
    check_condensation(config)

    rows = ordered_map(lambda point: _scan_row(config, *point), config.grid(), workers)
    if fmt == "csv":
        frame = pd.DataFrame(rows, columns=CSV_COLUMNS)
        text = frame.to_csv(index=False, float_format="%.17g", lineterminator="\n", na_rep="nan")
    else:
        text = to_json({"meta": config.model_dump(exclude={"output"}), "rows": rows}) + "\n"
    _emit(text, output)

    failed = sum(row["status"] != "ok" for row in rows)
    if failed:
        logger.error(f"❌ {failed} of {len(rows)} scan points failed")
        return 1
    return 0


@cli.command()
@click.argument("suite", type=click.Choice([*SUITES, "all"]))
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option("--out", "output", type=click.Path(dir_okay=False), default=None)
@click.option("--instances", type=click.FloatRange(min=0, min_open=True), default=1.0, show_default=True, help="Scale factor for random instance counts.")
@click.option("--workers", type=click.IntRange(min=1), default=None)
def verify(suite, seed, output, instances, workers):
    """Run property suites; exit status 1 on any violation."""
    payload = run_suites(suite, seed, instances, workers)
    _emit(to_json(payload) + "\n", output)
    return 1 if payload["report"]["violations"] else 0


@cli.command()
@click.option("--beta", type=float, required=True)
@click.option("--rho", type=float, required=True)
@n_option
@stats_option
def fugacity(beta, rho, n, stats):
    """Solve the ideal-gas density equation for z."""
    state = solve_fugacity(beta, rho, n, Statistics(stats))
    fields = {"z": state.z, "mu": state.mu}
    if state.stats is Statistics.BOSE:
        fields["rho_c"] = critical_density(beta, n)
    _record(fields)
    return 0


@cli.command()
@click.option("--beta", type=float, required=True)
@click.option("--rho", type=float, required=True)
@n_option
@stats_option
def exchange(beta, rho, n, stats):
    """Compare the real-space and momentum-space exchange integrals."""
    state = solve_fugacity(beta, rho, n, Statistics(stats))
    real_space = profile_exchange_integral(build_gamma_tilde_profile(state))
    momentum = exchange_integral_momentum(state)
    _record({"profile": real_space, "momentum": momentum, "relative_gap": abs(real_space - momentum) / momentum})
    return 0


@cli.command()
@click.option("--R", "R", type=float, required=True, help="Split radius.")
@click.option("--s-max", type=float, default=None, help="Largest distance; defaults to 4R.")
@click.option("--points", type=click.IntRange(min=2), default=200, show_default=True)
@click.option("--out", "output", type=click.Path(dir_okay=False), default=None)
def decompose(R, s_max, points, output):
    """Tabulate V_{<R}, V_{>R} and 1/s for plotting."""
    try:
        split = SplitPotential(R=R)
    except ValidationError as e:
        raise click.UsageError(str(e)) from e
    s_max = s_max or 4.0 * R
    short, long = split.table(s_max, points)
    s = short.grid
    frame = pd.DataFrame({"s": s, "v_short": short.values, "v_long": long.values, "coulomb": 1.0 / s})
    _emit(frame.to_csv(index=False, float_format="%.17g", lineterminator="\n"), output)
    return 0


def main(argv=None) -> int:
    """Runs the CLI and maps failures to exit codes (usage 64, condensation 2, other errors 1)."""
    logging.basicConfig(level=LOG_LEVEL)
    try:
        code = cli.main(args=argv, prog_name="jellium", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return USAGE_EXIT
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.exceptions.Abort:
        return 1
    except CondensationError as e:
        logger.error(f"❌ {e}")
        click.echo(f"error: {e}", err=True)
        return 2
    except (JelliumError, ValidationError) as e:
        logger.error(f"❌ {e}")
        click.echo(f"error: {e}", err=True)
        return 1
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
