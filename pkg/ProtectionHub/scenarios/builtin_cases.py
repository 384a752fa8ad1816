import json
import os

from rich.console import Console
from rich.table import Table

from ProtectionHub.scenarios.scenario_config import ConfigError, parse_scenario

CASES_DIR = os.path.join(os.path.dirname(__file__), 'cases')
NETWORK_FILE = os.path.join(CASES_DIR, 'microgrid.json')
CASES_FILE = os.path.join(CASES_DIR, 'cases.json')


def _read_json(path):
    with open(path, 'r') as handle:
        return json.load(handle)


def load_case_catalog():
    return _read_json(CASES_FILE)


def list_cases():
    """(name, description, events) for every built-in case, in name order."""
    catalog = load_case_catalog()
    return [(name, entry["description"], tuple(entry["events"])) for name, entry in sorted(catalog.items())]


def case_config(name):
    """Full scenario dict for a built-in case: the shared microgrid plus the case's events."""
    catalog = load_case_catalog()
    if name not in catalog:
        raise ConfigError(f"unknown case '{name}', expected one of {', '.join(sorted(catalog))}", "case")
    data = _read_json(NETWORK_FILE)
    entry = catalog[name]
    data["name"] = name
    data["description"] = entry["description"]
    data["events"] = entry["events"]
    if "expectations" in entry:
        data["expectations"] = entry["expectations"]
    return data


def load_case(name):
    return parse_scenario(case_config(name), default_name=name)


def _event_summary(event):
    parameter = f"alpha={event['alpha']}" if "alpha" in event else f"r_f={event.get('r_f')}"
    return f"{event['kind']} {','.join(event['targets'])} {event['start']:g}-{event['end']:g}s {parameter}"


def print_cases(console=None):
    console = console or Console()
    table = Table(title="Built-in case studies")
    table.add_column("Case", style="bold cyan")
    table.add_column("Description")
    table.add_column("Events", style="magenta")
    for name, description, events in list_cases():
        table.add_row(name, description, "\n".join(_event_summary(e) for e in events))
    console.print(table)
