"""Acceptance criteria 1-11, one test each; results are summarised at the end of the run."""

from __future__ import annotations

import time

import pytest

import _acceptance as A

LIMITS = {1: 10, 2: 10, 3: 120, 4: 120, 5: 600, 6: 300, 7: 300, 8: 300, 9: 600, 10: 1800}
TITLES = {
    1: "exact-chain oracles (stationarity, return times)",
    2: "hitting-time bound audit",
    3: "meeting-time oracle agreement",
    4: "interchange exactness",
    5: "interchange scaling shape",
    6: "clock properties",
    7: "schedule uniformity probe",
    8: "synchronous protocol suite",
    9: "six-state leader election end to end",
    10: "simulated fast protocols end to end",
    11: "determinism of data files",
}


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def _check(num, data_dir, record_property):
    t0 = time.perf_counter()
    data, passed, summary = A.PRODUCERS[num]()
    elapsed = time.perf_counter() - t0
    (data_dir / f"ac{num:02d}.json").write_bytes(A.dumps(data))
    in_time = elapsed < LIMITS[num]
    record_property("detail", f"{summary} [{elapsed:.1f}s, limit {LIMITS[num]}s]")
    assert passed, summary
    assert in_time, f"took {elapsed:.1f}s, limit {LIMITS[num]}s"


@pytest.mark.criterion(1, TITLES[1])
def test_ac01_exact_chain_oracles(data_dir, record_property):
    _check(1, data_dir, record_property)


@pytest.mark.criterion(2, TITLES[2])
def test_ac02_hitting_time_bound(data_dir, record_property):
    _check(2, data_dir, record_property)


@pytest.mark.criterion(3, TITLES[3])
def test_ac03_meeting_time_agreement(data_dir, record_property):
    _check(3, data_dir, record_property)


@pytest.mark.criterion(4, TITLES[4])
def test_ac04_interchange_exactness(data_dir, record_property):
    _check(4, data_dir, record_property)


@pytest.mark.criterion(5, TITLES[5])
def test_ac05_interchange_scaling(data_dir, record_property):
    _check(5, data_dir, record_property)


@pytest.mark.criterion(6, TITLES[6])
def test_ac06_clock_properties(data_dir, record_property):
    _check(6, data_dir, record_property)


@pytest.mark.criterion(7, TITLES[7])
def test_ac07_schedule_uniformity(data_dir, record_property):
    _check(7, data_dir, record_property)


@pytest.mark.criterion(8, TITLES[8])
def test_ac08_sync_protocols(data_dir, record_property):
    _check(8, data_dir, record_property)


@pytest.mark.criterion(9, TITLES[9])
def test_ac09_token_leader_election(data_dir, record_property):
    _check(9, data_dir, record_property)


@pytest.mark.criterion(10, TITLES[10])
def test_ac10_simulated_fast_protocols(data_dir, record_property):
    _check(10, data_dir, record_property)


@pytest.mark.criterion(11, TITLES[11])
def test_ac11_determinism(data_dir, record_property):
    differing = []
    for num, produce in A.PRODUCERS.items():
        path = data_dir / f"ac{num:02d}.json"
        first = path.read_bytes() if path.exists() else A.dumps(produce()[0])
        if A.dumps(produce()[0]) != first:
            differing.append(num)
    record_property("detail", f"{len(A.PRODUCERS) - len(differing)}/{len(A.PRODUCERS)} criteria reproduce "
                              f"byte-identical data files" + (f"; differing: {differing}" if differing else ""))
    assert not differing
