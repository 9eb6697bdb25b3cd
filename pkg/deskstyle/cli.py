import sys
from pathlib import Path
from typing import Any, List, Optional

import typer

try:  # newer typer vendors its own click; catch the exceptions it actually raises
    from typer import _click as click
except ImportError:
    import click
from pydantic import ValidationError

from deskstyle.core.configs import StyleTransferConfig
from deskstyle.core.enums import DenoiserKind, SweepAxis
from deskstyle.core.pipeline import ablation_suite, transfer
from deskstyle.evaluation.images import load_image, save_image
from deskstyle.evaluation.metrics import artfid as compose_artfid
from deskstyle.evaluation.metrics import metrics_row, write_metrics_csv
from deskstyle.evaluation.selftest import run_selftest
from deskstyle.evaluation.sweeps import SweepSpec, run_sweep
from deskstyle.exceptions import DeskstyleError
from deskstyle.settings import logger

app = typer.Typer(no_args_is_help=True, add_completion=False)

CONFIG_HELP = "key=value config file; flags override its values"
VERBOSE_OPTION = typer.Option(True, "--verbose/--quiet", help="Log progress")


def load_config(config: Optional[Path], **overrides: Any) -> StyleTransferConfig:
    """Config from an optional file with CLI overrides applied (None means not given)"""
    if config is not None:
        return StyleTransferConfig.from_file(config, **overrides)
    return StyleTransferConfig.from_dict({}, **overrides)


@app.command(name="transfer")
def transfer_command(
    content: Path = typer.Option(..., "--content", help="Content image (PPM)"),
    style: Path = typer.Option(..., "--style", help="Style image (PPM)"),
    out: Path = typer.Option(..., "--out", help="Output image (PPM)"),
    alpha_c: Optional[float] = typer.Option(None, "--alpha-c"),
    alpha_s: Optional[float] = typer.Option(None, "--alpha-s"),
    spi_n: Optional[int] = typer.Option(None, "--spi-n"),
    blocks: Optional[str] = typer.Option(None, "--blocks", help="e.g. 5,6 or [5,6] or late"),
    guidance: Optional[float] = typer.Option(None, "--guidance"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    steps: Optional[int] = typer.Option(None, "--T", help="Diffusion steps"),
    prompt_content: Optional[str] = typer.Option(None, "--prompt-content"),
    prompt_style: Optional[str] = typer.Option(None, "--prompt-style"),
    denoiser: Optional[DenoiserKind] = typer.Option(None, "--denoiser"),
    fid: Optional[float] = typer.Option(None, "--fid", help="External FID for ArtFID"),
    lpips: Optional[float] = typer.Option(None, "--lpips", help="External LPIPS for ArtFID"),
    metrics: Optional[Path] = typer.Option(None, "--metrics", help="Metrics CSV to write"),
    config: Optional[Path] = typer.Option(None, "--config", help=CONFIG_HELP),
    verbose: bool = VERBOSE_OPTION,
):
    """Stylize a content image with a style image."""
    cfg = load_config(
        config,
        alpha_c=alpha_c,
        alpha_s=alpha_s,
        spi_n=spi_n,
        injection_blocks=blocks,
        guidance_scale=guidance,
        seed=seed,
        T=steps,
        prompt_content=prompt_content,
        prompt_style=prompt_style,
        denoiser=denoiser,
    )
    content_img, style_img = load_image(content), load_image(style)
    report = transfer(content_img, style_img, cfg, verbose=verbose)
    save_image(out, report.stylized, verbose=verbose)
    if metrics is not None:
        row = metrics_row("transfer", report, content_img, style_img, fid=fid, lpips=lpips)
        write_metrics_csv([row], metrics, verbose=verbose)
    typer.echo(f"Wrote {out}")


@app.command()
def ablate(
    content: Path = typer.Option(..., "--content", help="Content image (PPM)"),
    style: Path = typer.Option(..., "--style", help="Style image (PPM)"),
    out_dir: Path = typer.Option(..., "--out-dir", help="Directory for images and metrics.csv"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    steps: Optional[int] = typer.Option(None, "--T", help="Diffusion steps"),
    denoiser: Optional[DenoiserKind] = typer.Option(None, "--denoiser"),
    config: Optional[Path] = typer.Option(None, "--config", help=CONFIG_HELP),
    verbose: bool = VERBOSE_OPTION,
):
    """Run the full method and every single-mechanism ablation."""
    cfg = load_config(config, seed=seed, T=steps, denoiser=denoiser)
    content_img, style_img = load_image(content), load_image(style)
    reports = ablation_suite(content_img, style_img, cfg, verbose=verbose)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for variant, report in reports.items():
        save_image(out_dir / f"{variant.file_stem}.ppm", report.stylized, verbose=verbose)
        rows.append(metrics_row(variant.value, report, content_img, style_img))
    write_metrics_csv(rows, out_dir / "metrics.csv", verbose=verbose)
    typer.echo(f"Wrote {len(reports)} variants to {out_dir}")


@app.command()
def sweep(
    content: Path = typer.Option(..., "--content", help="Content image (PPM)"),
    style: Path = typer.Option(..., "--style", help="Style image (PPM)"),
    axis: SweepAxis = typer.Option(..., "--axis"),
    values: str = typer.Option(..., "--values", help="Comma-separated; `table` for blocks"),
    out: Path = typer.Option(..., "--out", help="Metrics CSV"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    steps: Optional[int] = typer.Option(None, "--T", help="Diffusion steps"),
    denoiser: Optional[DenoiserKind] = typer.Option(None, "--denoiser"),
    config: Optional[Path] = typer.Option(None, "--config", help=CONFIG_HELP),
    verbose: bool = VERBOSE_OPTION,
):
    """Sweep one parameter and write one metrics row per value."""
    cfg = load_config(config, seed=seed, T=steps, denoiser=denoiser)
    spec = SweepSpec(axis=axis, values=values)
    run_sweep(load_image(content), load_image(style), cfg, spec, out, verbose=verbose)
    typer.echo(f"Wrote {len(spec.values)} rows to {out}")


@app.command()
def artfid(
    fid: float = typer.Option(..., "--fid"),
    lpips: float = typer.Option(..., "--lpips"),
):
    """Combine externally computed FID and LPIPS into ArtFID."""
    typer.echo(f"{compose_artfid(fid, lpips):.6f}")


@app.command()
def selftest(verbose: bool = VERBOSE_OPTION):
    """Run the built-in oracle suites."""
    results = run_selftest(verbose=verbose)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        typer.echo(f"{status} {result.name}: {result.detail}")
    if not all(result.passed for result in results):
        raise typer.Exit(code=2)


def cli_main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and return its exit code

    0 on success, 1 on a usage error (usage text on stderr), 2 on a runtime error.

    Args:
        argv (List[str], optional): Arguments after the program name. Defaults to sys.argv.

    Returns:
        int: Exit code
    """
    try:
        result = app(args=argv, standalone_mode=False)
    except click.exceptions.UsageError as e:
        e.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except (DeskstyleError, ValidationError, ValueError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 2
    return result if isinstance(result, int) else 0


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
