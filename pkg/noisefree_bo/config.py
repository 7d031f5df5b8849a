"""
Configuration settings for the noise-free Bayesian optimization toolkit.
"""
import os

import psutil

# Worker pool configuration
THREADS = int(os.getenv('NOISEFREE_BO_THREADS', '0')) or psutil.cpu_count(logical=False) or 1

# Output configuration
OUTPUT_DIR = os.getenv('NOISEFREE_BO_OUTPUT_DIR', 'results')

# Gram factorization: jitter ladder as multiples of the mean Gram diagonal
JITTER_LADDER = (1e-12, 1e-10, 1e-8, 1e-6)
DUPLICATE_TOLERANCE = 1e-12  # relative to the domain diameter
VARIANCE_CLAMP_TOLERANCE = 1e-8

# Lengthscale grid for marginal likelihood fitting
LENGTHSCALE_GRID_SIZE = 25
LENGTHSCALE_GRID_SPAN = (1e-2, 1e2)  # relative to the domain diameter
REFIT_EVERY = 5

# Acquisition maximizer
POOL_PER_DIMENSION = 500
POOL_CAP = 5000
REFINE_STARTS = 5
REFINE_HALVINGS = 10
REFINE_INITIAL_STEP = 0.1  # fraction of each side length
REFINE_MAX_SWEEPS = 100  # per step size

# ODE integration
RTOL = 1e-6
ATOL = 1e-9
OUTPUT_DT = 0.01

# Sampling
ENVELOPE_INFLATION = 1.05
MIN_ACCEPTANCE_RATE = 1e-4
MAX_REJECTION_PROPOSALS = 1_000_000

# Logging configuration
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
