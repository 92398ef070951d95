import os
from dotenv import load_dotenv

load_dotenv()


def _int_env(name, default):
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}")


# ------------------------------------------------------------
# Runtime caps (overridable through .env)
# ------------------------------------------------------------

CACHE_DIR = os.getenv("LCQFT_CACHE_DIR", os.path.join(".cache", "lcqft"))
THREADS = _int_env("LCQFT_THREADS", 1)

MAX_SITES = _int_env("LCQFT_MAX_SITES", 4096)
MAX_DENSE_ENTRIES = _int_env("LCQFT_MAX_DENSE_ENTRIES", 20_000_000)
MAX_DEGREE = _int_env("LCQFT_MAX_DEGREE", 6)
MAX_JET_ORDER = _int_env("LCQFT_MAX_JET_ORDER", 1)
MAX_LAMBDA_ORDER = _int_env("LCQFT_MAX_LAMBDA_ORDER", 4)
MAX_S_ORDER = _int_env("LCQFT_MAX_S_ORDER", 3)
MAX_HADAMARD_ORDER = _int_env("LCQFT_MAX_HADAMARD_ORDER", 4)


# ------------------------------------------------------------
# Default tolerances, keyed by check name
# ------------------------------------------------------------

DEFAULT_TOLERANCES = {
    "exact": 1e-12,
    "algebraic": 1e-12,
    "associativity": 1e-10,
    "homomorphism": 1e-10,
    "coincidence": 1e-8,
    "derivative_axiom": 1e-10,
    "finite_difference": 1e-6,
    "scaling_dimension": 1e-6,
    "ambiguity": 1e-12,
    "leibniz_exact": 1e-13,
    "leibniz_ratio": 0.2,
    "extension": 1e-6,
    "operator": 1e-10,
    "moller": 1e-10,
    "mc_sigma": 3.0,
    "ppa_locality": 1e-12,
    "ppa_oracle": 1e-6,
    "ppa_transported": 1e-10,
    "residual_exponent": 0.2,
    "divergence_rate": 0.1,
    "log_r2": 0.99,
}
