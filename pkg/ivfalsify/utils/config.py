"""
Configuration loading and logging setup
Reads YAML run documents, merges them over defaults and applies environment overrides
"""

import copy
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from ivfalsify.utils.errors import ValidationError

# Load environment variables
load_dotenv()

PROJECT_DIR = Path(__file__).resolve().parent.parent.parent
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DEFAULTS_FILE = PROJECT_DIR / "config" / "falsification_config.yaml"

DEFAULT_CONFIG: Dict[str, Any] = {
    'input': {},
    'support': {},
    'binarize': None,
    'restriction': {'preset': 'none'},
    'checks': {
        'feasibility': True,
        'flow': None,
        'fosd': None,
        'corollary1': False,
        'sufficient_takers': False,
        'submono_harness': False,
    },
    'caps': {
        'types': 4096,
        'subsets': 4096,
        'max_subset_size': None,
        'allow_large': False,
        'fosd_part1': 12,
        'fosd_part2': 8,
    },
    'output': {
        'format': 'text',
        'decimal': False,
    },
    'logging': {
        'level': 'WARNING',
        'file': None,
        'console_logging': True,
    },
}


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Merge override into a copy of base, recursing into nested dicts"""
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def read_document(path) -> Dict[str, Any]:
    """Read a YAML document; the top level must be a mapping"""
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            document = yaml.safe_load(f)
    except FileNotFoundError:
        raise ValidationError(f"Configuration file not found: {path}")
    except yaml.YAMLError as e:
        raise ValidationError(f"Invalid YAML in {path}: {e}")

    if document is None:
        return {}
    if not isinstance(document, dict):
        raise ValidationError(f"Configuration root must be a mapping: {path}")
    return document


MAPPING_SECTIONS = ('input', 'support', 'checks', 'caps', 'output', 'logging')
OPTIONAL_SECTIONS = ('input', 'support')


def check_sections(config: Dict[str, Any]) -> Dict[str, Any]:
    """Reject sections of the wrong shape before anything reads them"""
    for name in MAPPING_SECTIONS:
        if name in OPTIONAL_SECTIONS and config.get(name) is None:
            continue
        if not isinstance(config.get(name), dict):
            raise ValidationError(f"Config section '{name}' must be a mapping, got {config.get(name)!r}")
    restriction = config.get('restriction')
    if restriction is not None and not isinstance(restriction, dict):
        raise ValidationError(f"Config section 'restriction' must be a mapping such as {{preset: ...}}, "
                              f"got {restriction!r}")
    if isinstance(config.get('binarize'), (dict, list)):
        raise ValidationError("binarize must be a single treatment label")
    return config


def apply_environment(config: Dict[str, Any]) -> Dict[str, Any]:
    """Apply IVFALSIFY_* environment overrides"""
    if os.getenv('IVFALSIFY_LOG_LEVEL'):
        config['logging']['level'] = os.getenv('IVFALSIFY_LOG_LEVEL')
    if os.getenv('IVFALSIFY_LOG_FILE'):
        config['logging']['file'] = os.getenv('IVFALSIFY_LOG_FILE')
    if os.getenv('IVFALSIFY_CAP_TYPES'):
        config['caps']['types'] = int(os.getenv('IVFALSIFY_CAP_TYPES'))
    if os.getenv('IVFALSIFY_CAP_SUBSETS'):
        config['caps']['subsets'] = int(os.getenv('IVFALSIFY_CAP_SUBSETS'))
    return config


def load_config(config_file: Optional[str] = None, document: Optional[Dict[str, Any]] = None,
                defaults_file: Optional[Path] = DEFAULTS_FILE) -> Dict[str, Any]:
    """
    Build the effective run configuration

    Layers, lowest first: DEFAULT_CONFIG, the defaults file (when present),
    the run document, environment overrides.

    Args:
        config_file: Path to a YAML run document
        document: Already-parsed document (takes precedence over the file)
        defaults_file: Site defaults document; None skips it

    Returns:
        Merged configuration
    """
    if document is None:
        document = read_document(config_file) if config_file else {}
    config = DEFAULT_CONFIG
    if defaults_file is not None and Path(defaults_file).is_file():
        config = deep_merge(config, read_document(defaults_file))
    config = deep_merge(config, document)
    config = apply_environment(check_sections(config))

    if config_file:
        config['_base_dir'] = str(Path(config_file).resolve().parent)
    return config


def setup_logging(log_config: Optional[Dict[str, Any]] = None, verbose: bool = False):
    """Set up root logging from the `logging` config section"""
    log_config = log_config or {}
    level_name = 'DEBUG' if verbose else str(log_config.get('level', 'WARNING')).upper()
    log_level = getattr(logging, level_name, logging.WARNING)

    handlers = []
    log_file = log_config.get('file')
    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_path, encoding='utf-8')
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handlers.append(file_handler)

    if log_config.get('console_logging', True) or verbose:
        console_handler = logging.StreamHandler(sys.stderr)
        try:
            import colorlog
            console_handler.setFormatter(colorlog.ColoredFormatter('%(log_color)s' + LOG_FORMAT))
        except ImportError:
            console_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handlers.append(console_handler)

    logging.basicConfig(level=log_level, handlers=handlers, force=True)
