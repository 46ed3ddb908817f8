"""
This is where the run presets of the toolkit are found
"""

import os


class Config(object):
    """
    This is the parent configuration to be inherited from
    """
    LOG_LEVEL = os.getenv('STDM_LOG_LEVEL', 'INFO')
    DATA_DIR = 'data'
    OUTPUT_DIR = 'output'
    MODE = 'multivariate'
    VARIABLE = None

    # model block
    GRID_LEVEL = 1
    KAPPA = 2.0
    RANGE_FACTOR = 2.5

    # prior block
    A_SIGMA = 1.0
    B_SIGMA = 1.0
    A_TAU = 1.0
    B_TAU = 1.0
    LAMBDA = 0.25
    M0 = 0.0
    C0 = 1.0

    # sampler block
    N_ITER = 1500
    BURN_IN = None  # a third of N_ITER
    THIN = 1
    N_CHAINS = 2
    N_JOBS = 1
    SEED = 0
    STORE_STATES = True

    HOLDOUT = None

    # simulation block
    SIMULATION = 'latitudinal'
    N_LAT = 24
    N_LON = 48
    T = 144


class ReanalysisConfig(Config):
    """
    The reanalysis application: K=162 basis functions and
    two chains of 1,500 iterations
    """
    GRID_LEVEL = 2
    N_ITER = 1500
    BURN_IN = 500
    N_CHAINS = 2


class SimulationConfig(Config):
    """
    The simulation study: K=42, N=1152, T=144,
    2,500 iterations with 500 burn-in
    """
    GRID_LEVEL = 1
    N_ITER = 2500
    BURN_IN = 500
    N_CHAINS = 1


class ReducedConfig(Config):
    """
    The simulation study at desk scale: K=12, N=288, T=60
    """
    GRID_LEVEL = 0
    SIMULATION = 'reduced'
    N_LAT = 12
    N_LON = 24
    T = 60
    N_ITER = 800
    BURN_IN = 200
    N_CHAINS = 1


class SmokeConfig(Config):
    """
    A run that finishes in well under a minute
    """
    GRID_LEVEL = 0
    SIMULATION = 'reduced'
    N_LAT = 12
    N_LON = 24
    T = 20
    N_ITER = 50
    BURN_IN = 10
    N_CHAINS = 1


class TestingConfig(SmokeConfig):
    """
    The configuration for testing
    """
    LOG_LEVEL = 'WARNING'
    N_LAT = 6
    N_LON = 12
    T = 8
    N_ITER = 12
    BURN_IN = 4


RUN_CONFIG = {
    'default': Config,
    'reanalysis': ReanalysisConfig,
    'simulation': SimulationConfig,
    'reduced': ReducedConfig,
    'smoke': SmokeConfig,
    'testing': TestingConfig,
}
