"""Lab constants"""

# Version tag written into every JSON report
REPORT_SCHEMA_VERSION = 1

# Columns of the histogram CSV artifact
CSV_COLUMNS = ["bin_left", "bin_right", "empirical", "theoretical"]

# Acceptance thresholds
ACCEPTANCE_THRESHOLDS = {
    "ks_beta_law": 0.015,
    "ks_default": 0.02,
    "ks_meander": 0.015,
    "excursion_levy_relative": 0.10,
    "moment_se_multiplier": 3.0,
    "level_local_time_relative": 0.05,
    "level_occupation_relative": 0.10,
    "occupation_limit_relative": 0.10,
    "correlation_abs": 0.02,
    "ks_degenerate": 0.5,  # KS distance at which the sample is flagged as degenerate
}

# Zero-set rules: "bridge" marks the steps whose bridge touches zero (exact
# zero times and local time); "sigma" uses the 3-sigma band and the occupation
# estimator of L. Any other value is read as an explicit positive level.
ZERO_THRESHOLD_RULES = ("bridge", "sigma")

# Simulation defaults
SIM_DEFAULTS = {
    "epsilon": 0.02,  # local-time occupation window
    "zero_sigma_multiplier": 3.0,  # zero band = 3 one-step standard deviations
    "time_change_oversampling": 40,  # u-steps per output t-step
    # u-budget = (factor * t_horizon) ** (2 mu); the clock grows like u ** (1 / (2 mu))
    "u_budget_factor_low_mu": 400.0,
    "u_budget_factor_high_mu": 4.0,
    "u_chunk": 4_096,
    "rejection_max_rounds": 1_000,  # rejection samplers give up after this many rounds
}

# Special function configuration
SPECFUN_CONFIG = {
    "bessel_series_cutoff": 30.0,
    "bessel_series_max_terms": 60,
    "bessel_series_rtol": 1e-16,
    "bessel_overflow_z": 700.0,
    "gamma_max_argument": 171.62,
    "incomplete_gamma_max_iter": 500,
    "incomplete_gamma_eps": 1e-16,
    "lentz_tiny": 1e-300,
}

# Quadrature configuration
QUADRATURE_CONFIG = {
    "epsabs": 1e-10,
    "epsrel": 1e-10,
    "limit": 200,
    "gauss_jacobi_nodes": 64,
    "divergence_cap": 1e6,  # barrier integral above this counts as infinite
}

# Default grids used by experiments
EXPERIMENT_GRIDS = {
    "mu_sweep": [0.25, 0.5, 0.75],
    "hitting_levels": [0.5, 1.0],
    "equilibrium_times": [0.25, 0.5, 1.0],
    "z_tower_times": [0.25, 0.5],
    "excursion_lengths": [0.01, 0.03, 0.1],
    "constancy_times": [0.25, 0.5, 0.75, 1.0],
    "local_time_levels": [0.5],
}

# Error messages
ERROR_MESSAGES = {
    "mu_range": "mu must lie strictly between 0 and 1",
    "nu_range": "nu must lie strictly between -1 and 0",
    "negative_argument": "Argument must be non-negative",
    "gamma_domain": "Gamma function argument outside (0, 171.6]",
    "horizon_not_reached": "Clock did not reach the requested horizon; increase the u-budget",
    "tau_not_reached": "Paths did not reach the inverse local time; increase the horizon",
    "quadrature_failed": "Quadrature did not converge",
    "series_failed": "Series did not converge",
    "empty_sample": "Sample is empty",
    "unknown_experiment": "Unknown experiment id",
    "spec_inconsistent": "Balayage spec F and f are inconsistent",
    "negative_martingale": "Martingale took negative values",
}
