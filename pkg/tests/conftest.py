"""
Shared fixtures: the worked example in its raw, binarized and broken forms
"""

import sys
from pathlib import Path

import pytest

# Add project root to path
project_root = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(project_root))

from ivfalsify.obs_model import binarize  # noqa: E402
from ivfalsify.psi import psi_table  # noqa: E402
from ivfalsify.simulate import appendix_b_dgp, appendix_b_exclusion_break, generate_observed  # noqa: E402
from ivfalsify.typespace import expand_restriction, space_for  # noqa: E402

PROJECT_DIR = project_root
CONFIG_DIR = project_root / 'config'
DATA_DIR = project_root / 'data'


@pytest.fixture
def appendix_law():
    return generate_observed(appendix_b_dgp())


@pytest.fixture
def appendix_space(appendix_law):
    return space_for(appendix_law.support)


@pytest.fixture
def ordered_monotone(appendix_space):
    return expand_restriction({'preset': 'ordered-monotone'}, appendix_space, ordered=True)


@pytest.fixture
def appendix_psi(appendix_law):
    return psi_table(appendix_law)


@pytest.fixture
def binarized_law(appendix_law):
    return binarize(appendix_law, 'x2')


@pytest.fixture
def broken_law():
    return generate_observed(appendix_b_exclusion_break())
