import os
import sys

import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import DatasetSource, SyntheticParams
from services.data import prepare

# Small forests keep the experiment tests quick.
FAST_OVERRIDES = {"n_trees": 10}

FLOW_CSV = """id,proto,dur,sttl,service,label,attack_cat
1,tcp,0.5,254,-,1,Exploits
2,udp,0.1,31,dns,0,Normal
3,tcp,0.2,62,http,0,Normal
4,arp,0.3,254,http,1,DoS
"""


@pytest.fixture
def flow_csv(tmp_path):
    path = tmp_path / "flows.csv"
    path.write_text(FLOW_CSV, encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def small_source():
    return DatasetSource(synthetic=SyntheticParams(n_rows=1200, n_informative=3, n_noise=4, n_categorical=1))


@pytest.fixture(scope="session")
def prepared(small_source):
    return prepare(small_source, 42)
