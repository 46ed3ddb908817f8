"""
This is the entry point for the toolkit
"""

import logging
import sys

import click

from configuration.config import RUN_CONFIG
from mvstdm import controller, create_run_config
from mvstdm.evaluate import north_america_holdout
from mvstdm.storage import read_json
from mvstdm.utilities import NumericalError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

LOG_FORMAT = '%(asctime)s %(name)s %(levelname)s %(message)s'


class ExitCodeGroup(click.Group):
    """
    A command group mapping failures to exit codes: 1 for invalid input
    (usage errors included), 2 for numerical breakdowns and 3 for I/O
    """

    def main(self, *args, **kwargs):
        kwargs['standalone_mode'] = False
        code = EXIT_OK
        try:
            result = super().main(*args, **kwargs)
            if isinstance(result, int):
                code = result
        except click.exceptions.Abort:
            click.echo('Aborted!', err=True)
            code = EXIT_VALIDATION
        except click.ClickException as exc:
            exc.show()
            code = EXIT_VALIDATION
        except NumericalError as exc:
            click.echo('Numerical error: %s' % exc, err=True)
            code = EXIT_NUMERICAL
        except OSError as exc:
            click.echo('I/O error: %s' % exc, err=True)
            code = EXIT_IO
        except KeyError as exc:
            click.echo('Error: missing entry %s' % exc, err=True)
            code = EXIT_VALIDATION
        except (ValueError, TypeError) as exc:
            click.echo('Error: %s' % exc, err=True)
            code = EXIT_VALIDATION
        sys.exit(code)


def config_options(func):
    """The options shared by every command driven by a run configuration"""
    options = [
        click.option('--config', 'config_file', type=click.Path(dir_okay=False),
                     help='JSON run configuration, applied over the preset.'),
        click.option('--seed', type=int, help='Master seed.'),
        click.option('--level', 'grid_level', type=int, help='Icosahedral grid level.'),
        click.option('--kappa', type=float, help='SAR kappa.'),
        click.option('--range-factor', type=float, help='Wendland range in mesh spacings.'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def load_config(ctx, config_file, **overrides):
    return create_run_config(ctx.obj['preset'], config_file, overrides)


@click.group(cls=ExitCodeGroup)
@click.option('--preset', envvar='STDM_SETTINGS', default='default', show_default=True,
              type=click.Choice(sorted(RUN_CONFIG)), help='Run preset.')
@click.option('-v', '--verbose', is_flag=True, help='Log debugging output.')
@click.pass_context
def cli(ctx, preset, verbose):
    """Multivariate space-time dynamic model toolkit"""
    level = 'DEBUG' if verbose else RUN_CONFIG[preset].LOG_LEVEL
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)
    ctx.obj = {'preset': preset}


@cli.command()
@click.argument('level', type=int)
@click.option('--output', type=click.Path(dir_okay=False), default=None,
              help='Defaults to grid_level<LEVEL>.json.')
def grid(level, output):
    """Write the icosahedral grid of LEVEL as JSON"""
    built = controller.cmd_grid(level, output or 'grid_level%d.json' % level)
    click.echo('K=%d' % built.size)


@cli.command()
@config_options
@click.option('--simulation', help='Simulation design (latitudinal, reduced, cross-lag).')
@click.option('--n-lat', type=int)
@click.option('--n-lon', type=int)
@click.option('-T', '--times', 't', type=int, help='Number of time steps.')
@click.option('--output', 'data_dir', type=click.Path(file_okay=False),
              help='Dataset directory to write.')
@click.pass_context
def simulate(ctx, config_file, **overrides):
    """Simulate a synthetic dataset with its true states and parameters"""
    config = load_config(ctx, config_file, **overrides)
    obs = controller.cmd_simulate(config)
    click.echo('M=%d N=%d T=%d -> %s' % (obs.M, obs.N, obs.T, config.data_dir))


@cli.command()
@click.option('--input', 'inputs', type=(click.Path(dir_okay=False),
                                         click.Path(dir_okay=False)),
              multiple=True, required=True, help='A gridded CSV and its JSON manifest.')
@click.option('--output', type=click.Path(file_okay=False), required=True)
@click.option('--n-lat', type=int, default=24, show_default=True)
@click.option('--n-lon', type=int, default=48, show_default=True)
@click.option('--reference', type=(int, int), default=None,
              help='First and last year of the climatology.')
@click.option('--period', type=(str, str), default=None, help='First and last YYYY-MM.')
@click.option('--unweighted', is_flag=True, help='Average without area weights.')
def ingest(inputs, output, n_lat, n_lon, reference, period, unweighted):
    """Regrid and standardize gridded series into a dataset"""
    obs = controller.cmd_ingest(inputs, output, n_lat, n_lon, reference_years=reference,
                                period=period, weighted=not unweighted)
    click.echo('M=%d N=%d T=%d -> %s' % (obs.M, obs.N, obs.T, output))


@cli.command()
@config_options
@click.option('--data', 'data_dir', type=click.Path(file_okay=False))
@click.option('--output', 'output_dir', type=click.Path(file_okay=False))
@click.option('--mode', type=click.Choice(controller.MODES))
@click.option('--variable')
@click.option('--n-iter', type=int)
@click.option('--burn-in', type=int)
@click.option('--thin', type=int)
@click.option('--chains', 'n_chains', type=int)
@click.option('--jobs', 'n_jobs', type=int, help='Chains run in parallel.')
@click.option('--store-states/--no-store-states', default=None)
@click.option('--holdout', 'holdout_file', type=click.Path(dir_okay=False),
              help='JSON holdout block.')
@click.option('--north-america', 'north_america', metavar='VARIABLE',
              help='Hold out VARIABLE over North America, Aug 1991 to Jul 1994.')
@click.pass_context
def fit(ctx, config_file, holdout_file, north_america, **overrides):
    """Run the Gibbs sampler and write the posterior draws"""
    if holdout_file is not None:
        overrides['holdout'] = read_json(holdout_file)
    elif north_america is not None:
        overrides['holdout'] = north_america_holdout(north_america).to_dict()
    config = load_config(ctx, config_file, **overrides)
    draws, manifest = controller.cmd_fit(config)
    for chain in manifest['chains']:
        click.echo('chain %d: %d draws in %.1fs' % (chain['chain'], chain['n_draws'],
                                                   chain['elapsed_seconds']))
    click.echo('-> %s' % config.output_dir)


@cli.command()
@click.argument('draws_dir', type=click.Path(file_okay=False))
@click.option('--output', type=click.Path(dir_okay=False), default='predictions.csv',
              show_default=True)
@click.option('--data', 'data_dir', type=click.Path(file_okay=False),
              help='Dataset directory; defaults to the one the fit used.')
def predict(draws_dir, output, data_dir):
    """Write predictive summaries of the held-out entries"""
    share = controller.cmd_predict(draws_dir, output, data_dir)
    click.echo('coverage %.4f -> %s' % (share, output))


@cli.command()
@click.option('--model', 'models', type=(str, click.Path(file_okay=False)),
              multiple=True, required=True, help='A model label and its draws directory.')
@click.option('--output', type=click.Path(file_okay=False), default='scores',
              show_default=True)
@click.option('--data', 'data_dir', type=click.Path(file_okay=False))
def score(models, output, data_dir):
    """Score held-out predictions with CRPS and RMSPE"""
    table = controller.cmd_score(models, output, data_dir)
    click.echo(table.averaged.to_string(index=False))


@cli.command()
@click.argument('draws_dir', type=click.Path(file_okay=False))
@click.option('--output', type=click.Path(dir_okay=False), default='projection.csv',
              show_default=True)
def project(draws_dir, output):
    """Write projected transition blocks per location"""
    frame = controller.cmd_project(draws_dir, output)
    click.echo('%d rows -> %s' % (len(frame), output))


if __name__ == '__main__':
    cli()
