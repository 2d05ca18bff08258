from pathlib import Path

import click
import logfire
import pandas as pd
from dotenv import load_dotenv

from ibfgs import experiment
from ibfgs.data import generate_gaussian_pair, serialize_sparse
from ibfgs.errors import IBFGSError
from ibfgs.utils import atomic_write_text


@click.group()
def cli():
    """Incremental BFGS experiments for transductive SVMs."""
    load_dotenv()
    logfire.configure(send_to_logfire='if-token-present')


@cli.command()
@click.option('-c', '--config', 'config_path', type=click.Path(dir_okay=False), help='Experiment file (key=value).')
@click.option('--seed', type=int, help='Seed for splits, masking and initial points.')
@click.option('--variant', 'variants', multiple=True, help='Variant to run; repeat for several.')
@click.option('--max-iters', type=int, help='Iteration limit for every solver.')
@click.option('--labeled-fraction', type=float, help='Fraction of training samples that keep their label.')
@click.option('--output-dir', type=click.Path(file_okay=False), help='Where traces and tables are written.')
@click.option('--workers', type=int, help='Number of grid cells run in parallel.')
def run(config_path, seed, variants, max_iters, labeled_fraction, output_dir, workers):
    """Runs every (dataset, fold, C1, C2, variant) cell of an experiment grid."""
    overrides = {
        'SEED': seed, 'MAX_ITERS': max_iters, 'LABELED_FRACTION': labeled_fraction,
        'OUTPUT_DIR': output_dir, 'WORKERS': workers,
        'VARIANTS': ','.join(variants) if variants else None,
    }
    try:
        cfg = experiment.load_config(config_path, {k: str(v) for k, v in overrides.items() if v is not None})
        report = experiment.run_experiment(cfg)
    except IBFGSError as e:
        raise click.ClickException(str(e))

    click.echo(f'{len(report.summary)} cells written to {report.output_dir}')
    if not report.ok:
        for error in report.errors:
            click.echo(f'FAILED {error.dataset} fold {error.fold} C1={error.C1:g} C2={error.C2:g} '
                       f'{error.variant}: {error.message}', err=True)
        raise SystemExit(1)


@cli.command()
@click.option('--summary', 'summary_path', type=click.Path(exists=True, dir_okay=False),
              default='output/summary.csv', show_default=True)
@click.option('--output-dir', type=click.Path(file_okay=False), help='Defaults to the summary file directory.')
def profile(summary_path, output_dir):
    """Builds performance profiles (ratios.csv, profile.csv) from a summary table."""
    summary = pd.read_csv(summary_path, float_precision='round_trip')
    try:
        table = experiment.profile_summary(summary)
    except ValueError as e:
        raise click.ClickException(str(e))
    output_dir = output_dir or str(Path(summary_path).parent)
    experiment.write_profile(table, output_dir)
    click.echo(f'{len(table.ratios)} problems profiled, {len(table.degenerate_problems)} degenerate; '
               f'wrote {output_dir}/ratios.csv and {output_dir}/profile.csv')


@cli.command('gen-data')
@click.option('-o', '--output', required=True, type=click.Path(dir_okay=False))
@click.option('--n', default=50, show_default=True, help='Feature dimension.')
@click.option('--count', default=550, show_default=True, help='Number of samples.')
@click.option('--separation', default=2.5, show_default=True, help='Distance between the class means.')
@click.option('--seed', default=0, show_default=True)
def gen_data(output, n, count, separation, seed):
    """Writes a two-Gaussian sample file in the sparse index:value format."""
    try:
        samples = generate_gaussian_pair(n, count, separation, seed)
    except ValueError as e:
        raise click.ClickException(str(e))
    atomic_write_text(output, serialize_sparse(samples))
    click.echo(f'wrote {len(samples)} samples to {output}')


if __name__ == '__main__':
    cli()
