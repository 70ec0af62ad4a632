#!/usr/bin/env python3

# Licensed under the MIT license.

"""Constants and defaults for the planner, certificates and scenarios."""

ARTIFACT_SCHEMA_VERSION = 1

# Planner
DEFAULT_GOAL_BIAS = 0.2
DEFAULT_CONTRACTION = 0.94
DEFAULT_MAX_ITERS = 10_000
DEFAULT_LAYER_BUDGET = 500
DEFAULT_PROPOSAL_ATTEMPTS = 25  # samples per agent per layer

# Executor
DEFAULT_GOAL_TOLERANCE = 1.0  # meters
DEFAULT_MAX_STEPS = 5_000

# Certificates
SDP_SOLVERS = ("CLARABEL", "SCS")
VERIFY_TOLERANCE = 1e-6
INVARIANCE_SAMPLE_TOLERANCE = 1e-6
SOLVER_CONTRACTION_MARGIN = 1e-4  # posed contraction is lambda minus this

# Data engine
RANK_THRESHOLD_FACTOR = 1e-12
STEADY_STATE_MAX_CONDITION = 1e12
STEADY_STATE_RESIDUAL = 1e-8
CSV_FLOAT_FORMAT = "%.17g"

# Riccati
DARE_TOLERANCE = 1e-10
DARE_MAX_ITERATIONS = 10_000

# Spacecraft scenario
CW_MEAN_MOTION = 0.11  # 1/s
CW_SAMPLING_PERIOD = 30.0  # s
LQR_STATE_WEIGHTS = (1.0, 1.0, 0.1, 0.1)
LQR_INPUT_WEIGHT = 10.0
WORKSPACE_BOUNDS = (-50.0, 50.0, -50.0, 50.0)
CELL_SIZE = 10.0
DEBRIS_HALF_WIDTH = 8.0
