from __future__ import annotations

# Error code ranges (convention, not enforcement):
# - 20xx: configuration / schema errors (exit 2)
# - 21xx: model assumptions violated by the configured rates (exit 2)
# - 30xx: numerical failures inside the engine or the solvers (exit 3)
# - 40xx: acceptance checks that ran but did not pass (exit 4)

# Configuration error codes
CONFIG_FILE_NOT_FOUND = 2001
CONFIG_PARSE_FAILED = 2002
CONFIG_UNKNOWN_KEY = 2003
CONFIG_INVALID_VALUE = 2004
CONFIG_DOMAIN_VIOLATION = 2005

# Model assumption error codes
MODEL_RATE_BOUND_EXCEEDED = 2101
MODEL_NEGATIVE_DEATH_RATE = 2102

# Numerical failure error codes
NUMERIC_STABILITY_VIOLATED = 3001
NUMERIC_RUNAWAY_POPULATION = 3002
NUMERIC_SAMPLER_STALLED = 3003
NUMERIC_GRID_MISMATCH = 3004

# Acceptance check error codes
CHECK_FAILED = 4001
CHECK_NOT_MONOTONE = 4002


ERROR_CODE_CATALOG = {
    CONFIG_FILE_NOT_FOUND: {
        "name": "CONFIG_FILE_NOT_FOUND",
        "exit_status": 2,
        "scope": "config",
        "description": "The configuration file (or a referenced grid file) does not exist.",
    },
    CONFIG_PARSE_FAILED: {
        "name": "CONFIG_PARSE_FAILED",
        "exit_status": 2,
        "scope": "config",
        "description": "The configuration file is not valid YAML or not a mapping.",
    },
    CONFIG_UNKNOWN_KEY: {
        "name": "CONFIG_UNKNOWN_KEY",
        "exit_status": 2,
        "scope": "config",
        "description": "A section or key is not part of the run configuration schema.",
    },
    CONFIG_INVALID_VALUE: {
        "name": "CONFIG_INVALID_VALUE",
        "exit_status": 2,
        "scope": "config",
        "description": "A value cannot be coerced to its type or violates its constraint.",
    },
    CONFIG_DOMAIN_VIOLATION: {
        "name": "CONFIG_DOMAIN_VIOLATION",
        "exit_status": 2,
        "scope": "model",
        "description": "A position or trait lies outside the configured boxes.",
    },
    MODEL_RATE_BOUND_EXCEEDED: {
        "name": "MODEL_RATE_BOUND_EXCEEDED",
        "exit_status": 2,
        "scope": "engine",
        "description": "Event thresholds exceed one: the configured C_delta is too small.",
    },
    MODEL_NEGATIVE_DEATH_RATE: {
        "name": "MODEL_NEGATIVE_DEATH_RATE",
        "exit_status": 2,
        "scope": "model",
        "description": "A user supplied death rate returned a negative value.",
    },
    NUMERIC_STABILITY_VIOLATED: {
        "name": "NUMERIC_STABILITY_VIOLATED",
        "exit_status": 3,
        "scope": "pde",
        "description": "The solver produced NaN or negative mass; the time step breaks the stability bound.",
    },
    NUMERIC_RUNAWAY_POPULATION: {
        "name": "NUMERIC_RUNAWAY_POPULATION",
        "exit_status": 3,
        "scope": "engine",
        "description": "The event count exceeded the configured cap before the end time.",
    },
    NUMERIC_SAMPLER_STALLED: {
        "name": "NUMERIC_SAMPLER_STALLED",
        "exit_status": 3,
        "scope": "engine",
        "description": "Rejection sampling of a mutant trait did not accept within the attempt limit.",
    },
    NUMERIC_GRID_MISMATCH: {
        "name": "NUMERIC_GRID_MISMATCH",
        "exit_status": 3,
        "scope": "analysis",
        "description": "Two densities compared on different grids.",
    },
    CHECK_FAILED: {
        "name": "CHECK_FAILED",
        "exit_status": 4,
        "scope": "check",
        "description": "At least one diagnostic of the check suite did not pass.",
    },
    CHECK_NOT_MONOTONE: {
        "name": "CHECK_NOT_MONOTONE",
        "exit_status": 4,
        "scope": "sweep",
        "description": "A convergence sweep did not decrease monotonically.",
    },
}


__all__ = [
    "CONFIG_FILE_NOT_FOUND",
    "CONFIG_PARSE_FAILED",
    "CONFIG_UNKNOWN_KEY",
    "CONFIG_INVALID_VALUE",
    "CONFIG_DOMAIN_VIOLATION",
    "MODEL_RATE_BOUND_EXCEEDED",
    "MODEL_NEGATIVE_DEATH_RATE",
    "NUMERIC_STABILITY_VIOLATED",
    "NUMERIC_RUNAWAY_POPULATION",
    "NUMERIC_SAMPLER_STALLED",
    "NUMERIC_GRID_MISMATCH",
    "CHECK_FAILED",
    "CHECK_NOT_MONOTONE",
    "ERROR_CODE_CATALOG",
]
