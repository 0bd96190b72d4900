"""Tolerances and Monte Carlo budgets shared by the suites and the tests.

Each flakiness budget is tied to a replicate count: a fixed seed makes the
outcome deterministic, and the stated margins keep the nominal failure
probability of a correct implementation well below one in a thousand.
"""

# whitening contract: Frobenius error of a 10^4-replicate covariance estimate
# has standard deviation about sigma^2 K* / (n sqrt(10^4)); 0.05 is five sd.
WHITEN_REPLICATES = 10_000
WHITEN_FROB_FACTOR = 0.05

# pilot risk rate: slope of log risk against log n over a 32x schedule
RISK_SLOPE_TOL = 0.15
RISK_MAX_REPLICATES = 200
RISK_BOOTSTRAP = 1000

# bound reports are accepted when lhs <= rhs + 2 standard errors
REPORT_SE_MULTIPLIER = 2.0
LOCALIZATION_MIN_REPS = 50

# energy test: 500 permutations resolve p-values to 0.002
ENERGY_PERMUTATIONS = 500
ENERGY_MIN_SAMPLES = 100
EQUIVALENCE_RUNS = 20
EQUIVALENCE_MIN_PASS = 0.9

# score extraction / white noise checks (10^4 replicates)
CORRELATION_TOL = 0.05
VARIANCE_REL_TOL = 0.10

# regime checker: strict inequalities are decided with this slack so that
# exact boundary cases (alpha = 1/23) fall on the infeasible side
REGIME_SLACK = 1e-12

# numerical identities
GAUSSIAN_KL_TOL = 1e-10
OPERATOR_SQRT_FROB = 1e-8
