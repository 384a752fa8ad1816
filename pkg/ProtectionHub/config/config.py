import os
from multiprocessing import cpu_count
from dotenv import load_dotenv
from ProtectionHub.utils.logging_utils import log_message

# Load .env file
dotenv_path = os.path.join(os.path.dirname(__file__), '..', '..', '.env')
load_dotenv(dotenv_path)

TRUE_VALUES = ['true', '1', 'yes']


def get_output_dir():
    return os.getenv('GRIDSENTRY_OUTPUT_DIR', 'output')


def get_decimation():
    """DSE window stride in samples; values below 1 fall back to 1."""
    try:
        value = int(os.getenv('DSE_DECIMATION', '1'))
    except ValueError:
        log_message("DSE_DECIMATION is not an integer, using 1.", level="WARNING")
        return 1
    return max(value, 1)


def get_max_workers():
    try:
        return max(int(os.getenv('DSE_MAX_WORKERS', str(cpu_count()))), 1)
    except ValueError:
        log_message("DSE_MAX_WORKERS is not an integer, using cpu count.", level="WARNING")
        return cpu_count()


def is_strict_mode():
    return os.getenv('STRICT_MODE', 'false').lower() in TRUE_VALUES


def get_default_seed():
    try:
        return int(os.getenv('DEFAULT_SEED', '7'))
    except ValueError:
        log_message("DEFAULT_SEED is not an integer, using 7.", level="WARNING")
        return 7


def is_stream_dump_enabled():
    return os.getenv('DUMP_STREAMS', 'false').lower() in TRUE_VALUES
