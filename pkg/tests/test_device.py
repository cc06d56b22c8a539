import json

import jsonschema
import pytest

from verbsim.device import (
    CONNECTX3, CONNECTX4, OMNIPATH, DeviceProfile, builtin_profile, load_profile, max_contexts,
    tlb_engine,
)
from verbsim.errors import UnknownProfile


def test_connectx4_context_limits():
    assert max_contexts(CONNECTX4, 8) == 1021
    assert max_contexts(CONNECTX4, 256) == 31
    assert max_contexts(CONNECTX4, 8168) == 1


def test_register_counts():
    assert CONNECTX4.datapath_registers == 16_336
    assert CONNECTX3.datapath_registers == 8088 + 1011
    assert OMNIPATH.datapath_registers == 160


def test_max_contexts_rejects_zero():
    with pytest.raises(ValueError):
        max_contexts(CONNECTX4, 0)


def test_tlb_engine_is_per_cache_line():
    assert tlb_engine(0x1000, 8) == tlb_engine(0x1000 + 63, 8)
    assert tlb_engine(0x1000, 8) != tlb_engine(0x1000 + 64, 8)
    assert tlb_engine(64 * 9, 8) == 1


def test_builtin_lookup_and_unknown():
    assert builtin_profile("ConnectX4") is CONNECTX4
    with pytest.raises(UnknownProfile):
        builtin_profile("connectx9")


def test_custom_profile_overrides(tmp_path):
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"total_uars": 100, "max_qps": 10}))
    p = builtin_profile("custom", path, tlb_engines=4)
    assert (p.total_uars, p.max_qps, p.tlb_engines) == (100, 10, 4)
    assert max_contexts(p, 8) == 12


def test_profile_schema_rejects_unknown_fields(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"name": "x", "total_uars": 10, "bogus": 1}))
    with pytest.raises(jsonschema.ValidationError):
        load_profile(path)


def test_profile_invariants():
    with pytest.raises(ValueError):
        DeviceProfile(name="x", total_uars=0)
    with pytest.raises(ValueError):
        DeviceProfile(name="x", total_uars=8, total_uuar_slots_per_uar=8)
