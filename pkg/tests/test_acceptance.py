"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines; every tolerance is pinned here.
"""

import time

import numpy as np

from lrc.channels import coherent_rotation
from lrc.cli import main
from lrc.verify import (
    check_character_orthogonality,
    check_clifford_path,
    check_compiled_equals_bare,
    check_measurement_rc,
    check_sampling_equivalence,
    check_t_path,
    check_theorem1,
    check_theorem2_suite,
    run_toffoli_example,
)
from lrc.weyl import WeylOperator

MASTER_SEED = 271828

ALL_CODES = ("bitflip3", "phaseflip3", "qutrit_rep3", "five_one_three")


def emit(num, name, passed, value, tolerance):
    status = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {num:02d} {name}: {status} value={value:.3e} tolerance={tolerance:.3e}")
    assert passed, f"criterion {num} ({name}) failed: value={value} tolerance={tolerance}"


def test_criterion_01_theorem1_channel_identity():
    start = time.perf_counter()
    worst = 0.0
    for name in ALL_CODES:
        rep = check_theorem1(name, seed=MASTER_SEED)
        worst = max(worst, rep.value)
    elapsed = time.perf_counter() - start
    emit(1, "theorem1 channel identity", worst < 1e-10 and elapsed < 5.0, worst, 1e-10)
    assert elapsed < 5.0, f"theorem1 runtime {elapsed:.2f}s exceeds 5s"


def test_criterion_02_character_orthogonality_exact():
    violations = 0.0
    for name in ALL_CODES:
        rep = check_character_orthogonality(name, seed=MASTER_SEED)
        violations += rep.value
    emit(2, "character orthogonality (exact)", violations == 0.0, violations, 0.0)


def test_criterion_03_theorem2_corrected_twirl():
    rep = check_theorem2_suite(seed=MASTER_SEED, noise_draws=10)
    emit(3, "theorem2 corrected twirl", rep.passed, rep.value, rep.tolerance)


def test_criterion_04_toffoli_example():
    start = time.perf_counter()
    zero = run_toffoli_example(0.0, blocks="all", seed=MASTER_SEED)
    point1 = run_toffoli_example(0.1, blocks="all", seed=MASTER_SEED)
    elapsed = time.perf_counter() - start

    infidelity = 1.0 - zero.details["fidelity_with_target"]
    pre = point1.details["inter_cospace_before"]
    post = point1.details["inter_cospace_after"]
    pops = point1.details["populations_after"]
    pop_dev = max(
        abs(pops["0,0"] - np.cos(0.1) ** 2), abs(pops["1,0"] - np.sin(0.1) ** 2)
    )
    passed = (
        infidelity <= 1e-12
        and pre > 0.19
        and post < 1e-10
        and pop_dev < 1e-10
        and elapsed < 60.0
    )
    emit(4, "toffoli example", passed, max(post, pop_dev, infidelity), 1e-10)
    assert elapsed < 60.0, f"toffoli runtime {elapsed:.2f}s exceeds 60s"


def test_criterion_05_clifford_path_weyl_diagonal():
    rep = check_clifford_path(seed=MASTER_SEED, noise_draws=5)
    emit(5, "clifford path PTM-diagonal", rep.passed, rep.value, rep.tolerance)


def test_criterion_06_t_gate_dihedral_path():
    rep = check_t_path(seed=MASTER_SEED, noise_draws=5)
    max_gap = max(abs(px - py) for px, py in rep.details["px_py"])
    emit(6, "T dihedral path p_X = p_Y", rep.passed and max_gap < 1e-10, max_gap, 1e-10)


def test_criterion_07_syndrome_extraction_rc():
    theta = 0.2
    rep = check_measurement_rc(
        "bitflip3",
        readout_noise=coherent_rotation(WeylOperator.x_op(2, 1), theta),
        seed=MASTER_SEED,
    )
    conf = np.array(rep.details["confusion"])
    oracle = np.array(
        [
            [np.cos(theta) ** 2, np.sin(theta) ** 2],
            [np.sin(theta) ** 2, np.cos(theta) ** 2],
        ]
    )
    conf_dev = float(np.max(np.abs(conf - oracle)))
    passed = rep.passed and conf_dev < 1e-10
    emit(7, "syndrome extraction RC", passed, max(rep.value, conf_dev), 1e-10)


def test_criterion_08_compiled_equals_bare():
    rep = check_compiled_equals_bare(seed=MASTER_SEED, n_circuits=100)
    emit(8, "compiled equals bare (100 circuits)", rep.passed, rep.value, rep.tolerance)


def test_criterion_09_sampling_equivalence():
    rep = check_sampling_equivalence(shots=10**5, seed=MASTER_SEED)
    again = check_sampling_equivalence(shots=10**5, seed=MASTER_SEED)
    deterministic = rep.value == again.value and rep.details == again.details
    emit(
        9,
        "sampling equivalence (1e5 shots)",
        rep.passed and deterministic,
        rep.value,
        rep.tolerance,
    )


def test_criterion_10_cli_determinism(tmp_path):
    from lrc.circuits import Gadget, LogicalCircuit, Register, serialize
    from lrc.codes import builtin_code

    circuit_path = tmp_path / "circuit.json"
    circuit_path.write_text(
        serialize(
            LogicalCircuit(
                d=2,
                registers=(
                    Register(
                        name="L0", kind="logical", qudits=(0, 1, 2), code=builtin_code("bitflip3")
                    ),
                ),
                gadgets=(Gadget.reset("L0", (0,)), Gadget.measurement("L0", "m")),
                classical_wires=("m",),
            )
        )
    )
    commands = [
        ["verify", "--check", "theorem1", "--seed", "9"],
        ["verify", "--check", "measurement_rc", "--format", "csv", "--seed", "9"],
        ["compile", "--circuit", str(circuit_path), "--mode", "sampled=50", "--seed", "9"],
        ["toffoli", "--delta", "0.1", "--seed", "9"],
        ["syndrome", "--rotation", "0.2", "--seed", "9"],
        ["sample", "--shots", "20000", "--seed", "9"],
    ]
    identical = True
    for i, argv in enumerate(commands):
        a = tmp_path / f"run{i}a.out"
        b = tmp_path / f"run{i}b.out"
        code_a = main(argv + ["--out", str(a)])
        code_b = main(argv + ["--out", str(b)])
        assert code_a == code_b == 0, argv
        if a.read_bytes() != b.read_bytes():
            identical = False
    emit(10, "CLI determinism", identical, 0.0 if identical else 1.0, 0.0)
