from datetime import datetime
import sys
import os
import platform
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Define log levels
LOG_LEVELS = {
    "DEBUG": 10,
    "INFO": 20,
    "WARNING": 30,
    "ERROR": 40,
    "CRITICAL": 50
}

# Check if running on Windows
IS_WINDOWS = platform.system().lower() == 'windows'

# Color codes - empty strings for Windows
if IS_WINDOWS:
    COLOR_CODES = {
        "DEFAULT": "",
        "RED_BOLD": "",
        "RED": "",
        "YELLOW": "",
        "BLUE": "",
        "MAGENTA": "",
        "GREEN": "",
        "END": ""
    }
else:
    COLOR_CODES = {
        "DEFAULT": "\033[0m",
        "RED_BOLD": "\033[1;31m",
        "RED": "\033[31m",
        "YELLOW": "\033[93m",
        "BLUE": "\033[94m",
        "MAGENTA": "\033[35m",
        "GREEN": "\033[92m",
        "END": "\033[0m"
    }

_log_file = None


def get_log_level():
    return LOG_LEVELS.get(os.getenv('LOG_LEVEL', 'INFO').upper(), 20)


def get_log_file():
    """
    Returns the session log file path, creating the log directory on first use.
    Returns None when file logging is disabled through LOG_TO_FILE.
    """
    global _log_file

    if os.getenv('LOG_TO_FILE', 'true').lower() not in ['true', '1', 'yes']:
        return None

    if _log_file is None:
        log_dir = os.getenv('LOG_DIR', 'logs')
        os.makedirs(log_dir, exist_ok=True)
        utc_now = datetime.utcnow().strftime('%Y-%m-%d_%H-%M-%S')
        _log_file = os.path.join(log_dir, f"gridsentry_{utc_now}.log")
    return _log_file


def get_color(message):
    """
    Determines the appropriate color for the log message based on its content.
    Returns empty string on Windows.
    """
    if IS_WINDOWS:
        return ""

    if "[CRITICAL]" in message:
        return COLOR_CODES["RED_BOLD"]
    elif "[ERROR]" in message:
        return COLOR_CODES["RED"]
    elif "[WARNING]" in message:
        return COLOR_CODES["YELLOW"]
    elif "[DEBUG]" in message:
        return COLOR_CODES["MAGENTA"]
    elif "TRIP" in message or "ALERT" in message:
        return COLOR_CODES["BLUE"]
    elif "completed" in message:
        return COLOR_CODES["GREEN"]
    return COLOR_CODES["DEFAULT"]


def log_message(message, level="INFO", output="stdout"):
    """
    Logs messages to the console and optionally to a log file.
    Colors are disabled on Windows.
    """
    if LOG_LEVELS.get(level, 20) < get_log_level():
        return

    timestamp = datetime.now().strftime('%Y-%m-%d %H:%M:%S')
    log_entry = f"{timestamp} [{level}] {message}\n"

    colored_message = log_entry if IS_WINDOWS else f"{get_color(log_entry)}{log_entry}{COLOR_CODES['END']}"

    if output == "stdout":
        sys.stdout.write(colored_message)
        sys.stdout.flush()
    elif output == "stderr":
        sys.stderr.write(colored_message)
        sys.stderr.flush()

    # Always write to the log file without color codes
    log_file = get_log_file()
    if log_file:
        with open(log_file, 'a') as handle:
            handle.write(log_entry)


def log_critical_error(error_message):
    """
    Logs a critical error.
    """
    log_message(f"CRITICAL error: {error_message}", level="CRITICAL", output="stderr")


def log_error(error_message):
    """
    Logs an error.
    """
    log_message(f"ERROR: {error_message}", level="ERROR", output="stderr")
