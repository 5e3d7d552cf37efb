import os
from dotenv import load_dotenv

load_dotenv()

def _clean_env_value(v):
    if not v:
        return None
    return v.strip().strip('"').strip("'")

def _int_env(name, default):
    value = _clean_env_value(os.environ.get(name))
    return int(value) if value else default

class Config:
    THREADS = _int_env('DEJAVU_THREADS', os.cpu_count() or 1)
    LOG_LEVEL = _clean_env_value(os.environ.get('DEJAVU_LOG_LEVEL')) or 'INFO'
    REGISTRY_URL = _clean_env_value(os.environ.get('DEJAVU_REGISTRY_URL'))
    # similarity block budget, in float32 cells, for one k-NN work unit
    KNN_BLOCK_FLOATS = _int_env('DEJAVU_KNN_BLOCK_FLOATS', 1 << 24)
    DEFAULT_K = 10
    DEFAULT_TOP_M = 10
    DEFAULT_BOOTSTRAP_REPS = 100
    DEFAULT_BOOTSTRAP_FRACTION = 0.1
