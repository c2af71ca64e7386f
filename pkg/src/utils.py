import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dotenv import load_dotenv

# Load .env file at the start when utils is imported
load_dotenv()

ENV_PREFIX = "SPECTRA_"

# Keys accepted from the environment and the type each one parses to
ENV_OVERRIDES = {
    "N_TRUNC": int,
    "STRIP_HEIGHT": float,
    "KEEP": int,
    "SEED": int,
    "THREADS": int,
    "OUT": str,
}


def load_env_overrides(prefix=ENV_PREFIX):
    """Reads SPECTRA_* overrides from the environment (already loaded by load_dotenv)."""
    overrides = {}
    for key, cast in ENV_OVERRIDES.items():
        raw = os.getenv(prefix + key)
        if raw is None or raw == "":
            continue
        try:
            overrides[key.lower()] = cast(raw)
        except ValueError:
            logging.getLogger(__name__).warning("Ignoring %s%s=%r: not a valid %s", prefix, key, raw, cast.__name__)
    return overrides


def ensure_dir(directory_path):
    """Creates a directory if it doesn't exist."""
    if not os.path.exists(directory_path):
        try:
            os.makedirs(directory_path)
        except OSError as e:
            # Handle potential race condition if dir is created between check and makedirs
            if not os.path.isdir(directory_path):
                logging.getLogger(__name__).error("Error creating directory %s: %s", directory_path, e)
                raise


def get_timestamp():
    """Returns a formatted timestamp string for filenames."""
    return time.strftime("%Y%m%d_%H%M%S")


def config_hash(config):
    """Short stable hash of a JSON-serializable config (key order independent)."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def setup_logging(verbose=False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)-7s %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )


def parallel_map(fn, items, threads=1):
    """Maps fn over items, in submission order, on a thread pool when threads > 1."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
