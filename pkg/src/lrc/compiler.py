"""Randomizing compilation passes over the gadget IR.

Each gadget type owns a draw space of named components; a policy selects
exhaustive enumeration of the full product space or seeded uniform
sampling, with per-gadget toggles for the three randomizations:

  * stabilizers: uniformly random stabilizer layers around every
    operation on encoded registers,
  * twirl: the corrected twirl G before / U G^dagger U^dagger after a
    unitary, the encoded-register and readout Weyls inside a syndrome
    extraction, and the idle-window twirl pair,
  * measurement_rc: random X^x Z^z ahead of a measurement with the
    classical output corrected by -x and the post-measurement restore
    Z^z' X^-x.

Adjacent inserted Weyls acting on the same register are merged into a
single layer; non-Weyl corrections (the rotation factors of the dihedral
path) stay separate.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .circuits import (
    IDLE,
    MEASUREMENT,
    READOUT_MEASUREMENT,
    RESET,
    SYNDROME_EXTRACTION,
    UNITARY,
    CompiledInstance,
    GadgetInsertions,
    Layer,
    LogicalCircuit,
    validate,
)
from .codes import StabilizerCode, enumerate_stabilizers, logical_weyls
from .weyl import WeylOperator, braiding_exponent, iter_weyls, weyl_from_matrix

DEFAULT_SEED = 271828


class CompileError(ValueError):
    pass


def t_gate_matrix() -> np.ndarray:
    """exp(-i*pi*Z/8), the eighth-root phase gate up to global phase."""
    return np.diag([np.exp(-1j * np.pi / 8), np.exp(1j * np.pi / 8)])


def _rotation_power(r: int) -> np.ndarray:
    """(T^2)^r, a power of the quarter phase gate."""
    return np.diag([1.0, 1j**r]).astype(complex)


@dataclass(frozen=True)
class TwirlGroupSpec:
    """Which group the corrected twirl of a unitary gadget draws from.

    kinds: 'trivial' (no twirl), 'logical_weyl' (the d^2k channel-distinct
    logical Weyls of the register's code), 'dihedral' (rotation-times-Weyl
    factored elements for a single-qubit T gadget), 'custom' (explicit
    unitaries).
    """

    kind: str = "trivial"
    elements: tuple = ()

    @classmethod
    def trivial(cls):
        return cls("trivial")

    @classmethod
    def logical_weyl(cls):
        return cls("logical_weyl")

    @classmethod
    def dihedral(cls):
        return cls("dihedral")

    @classmethod
    def custom(cls, unitaries):
        return cls("custom", tuple(np.asarray(u, dtype=complex) for u in unitaries))


@dataclass
class RandomizationPolicy:
    seed: int = DEFAULT_SEED
    mode: str = "exhaustive"  # 'exhaustive' | 'sampled'
    samples: int = 0
    stabilizers: bool = True
    twirl: bool = True
    measurement_rc: bool = True
    stabilizer_registers: tuple | None = None
    exhaustive_cap: int = 10**6
    twirl_groups: dict = field(default_factory=dict)  # gadget index -> TwirlGroupSpec
    default_twirl_group: TwirlGroupSpec = field(default_factory=TwirlGroupSpec.trivial)

    def group_for(self, gadget_index: int) -> TwirlGroupSpec:
        return self.twirl_groups.get(gadget_index, self.default_twirl_group)

    def stabilizers_for(self, register_name: str) -> bool:
        if not self.stabilizers:
            return False
        if self.stabilizer_registers is None:
            return True
        return register_name in self.stabilizer_registers

    def to_dict(self) -> dict:
        groups = {}
        for idx, spec in sorted(self.twirl_groups.items()):
            if spec.kind == "custom":
                raise CompileError("custom twirl groups are not serializable")
            groups[str(idx)] = spec.kind
        return {
            "seed": self.seed,
            "mode": "exhaustive" if self.mode == "exhaustive" else {"sampled": self.samples},
            "toggles": {
                "stabilizers": self.stabilizers,
                "twirl": self.twirl,
                "measurement_rc": self.measurement_rc,
            },
            "stabilizer_registers": (
                list(self.stabilizer_registers) if self.stabilizer_registers is not None else None
            ),
            "exhaustive_cap": self.exhaustive_cap,
            "twirl_groups": groups,
            "default_twirl_group": self.default_twirl_group.kind,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RandomizationPolicy":
        mode = data.get("mode", "exhaustive")
        if mode == "exhaustive":
            mode_name, samples = "exhaustive", 0
        elif isinstance(mode, dict) and "sampled" in mode:
            mode_name, samples = "sampled", int(mode["sampled"])
        else:
            raise CompileError(f"unknown mode {mode!r}")
        toggles = data.get("toggles", {})
        regs = data.get("stabilizer_registers")
        return cls(
            seed=int(data.get("seed", DEFAULT_SEED)),
            mode=mode_name,
            samples=samples,
            stabilizers=bool(toggles.get("stabilizers", True)),
            twirl=bool(toggles.get("twirl", True)),
            measurement_rc=bool(toggles.get("measurement_rc", True)),
            stabilizer_registers=tuple(regs) if regs is not None else None,
            exhaustive_cap=int(data.get("exhaustive_cap", 10**6)),
            twirl_groups={
                int(k): TwirlGroupSpec(v) for k, v in data.get("twirl_groups", {}).items()
            },
            default_twirl_group=TwirlGroupSpec(data.get("default_twirl_group", "trivial")),
        )

    @classmethod
    def from_json(cls, text: str) -> "RandomizationPolicy":
        return cls.from_dict(json.loads(text))


# -- group enumeration -----------------------------------------------------


def dihedral_elements(d: int = 2):
    """(rotation power, Weyl) pairs factoring the single-qubit dihedral group.

    Enumerates r in [0, 4) with every single-qubit Weyl; the channel-distinct
    projective elements are each covered a constant number of times, so a
    uniform draw over pairs is a uniform draw over the group.
    """
    if d != 2:
        raise CompileError("the dihedral twirl is defined for qubits only")
    out = []
    for r in range(4):
        for L in iter_weyls(2, 1):
            out.append((r, L))
    return out


def group_elements(spec: TwirlGroupSpec, code: StabilizerCode | None):
    if spec.kind == "trivial":
        return []
    if spec.kind == "logical_weyl":
        if code is None:
            raise CompileError("logical_weyl twirl needs an encoded register")
        return list(logical_weyls(code))
    if spec.kind == "dihedral":
        return dihedral_elements()
    if spec.kind == "custom":
        return list(spec.elements)
    raise CompileError(f"unknown twirl group kind {spec.kind!r}")


def compute_propagation_correction(A: WeylOperator, L: WeylOperator) -> WeylOperator:
    """Readout-register Weyl G with (L x I) ctrl-A (L^dagger x G) = ctrl-A.

    The encoded operator kicks Z^m onto the control, m being the braiding
    exponent of L with A; logical Weyls commute with every stabilizer
    generator, so for them the correction is the identity.
    """
    m = braiding_exponent(L, A)
    return WeylOperator(A.d, (0,), (m,))


# -- draw spaces -------------------------------------------------------------


@dataclass
class Component:
    name: str
    values: list


def gadget_components(circuit: LogicalCircuit, index: int, policy: RandomizationPolicy):
    """Named draw components for one gadget under the policy toggles."""
    g = circuit.gadgets[index]
    d = circuit.d
    comps: list = []

    def stab_component(tag, reg_name):
        reg = circuit.register(reg_name)
        if reg.kind != "logical" or not policy.stabilizers_for(reg_name):
            return
        stabs = list(enumerate_stabilizers(reg.code))
        if len(stabs) > 1:
            comps.append(Component(f"{tag}:{reg_name}", stabs))

    if g.kind == RESET:
        reg = circuit.register(g.registers[0])
        if reg.kind == "logical":
            stab_component("S", g.registers[0])

    elif g.kind == UNITARY:
        for name in g.registers:
            stab_component("S", name)
        spec = policy.group_for(index)
        if policy.twirl and spec.kind != "trivial":
            code = _single_logical_code(circuit, g)
            if spec.kind == "dihedral":
                _require_t_gadget(circuit, g)
                comps.append(Component("G", dihedral_elements()))
            else:
                comps.append(Component("G", group_elements(spec, code)))
        for name in g.registers:
            stab_component("S'", name)

    elif g.kind == MEASUREMENT:
        reg = circuit.register(g.registers[0])
        stab_component("S", g.registers[0])
        if policy.measurement_rc:
            k = reg.code.k
            vectors = list(itertools.product(range(d), repeat=k))
            comps.append(Component("x", vectors))
            comps.append(Component("z", vectors))

    elif g.kind == SYNDROME_EXTRACTION:
        reg = circuit.register(g.registers[0])
        stab_component("S", g.registers[0])
        if policy.twirl:
            comps.append(Component("L", list(logical_weyls(reg.code))))
            comps.append(Component("P", list(iter_weyls(d, 1))))
        if policy.measurement_rc:
            comps.append(Component("x", list(range(d))))
            comps.append(Component("z", list(range(d))))
            comps.append(Component("z'", list(range(d))))
        stab_component("S'", g.registers[0])
        if policy.twirl:
            comps.append(Component("Lh", list(logical_weyls(reg.code))))
        stab_component("S''", g.registers[0])

    elif g.kind == IDLE:
        reg = circuit.register(g.registers[0])
        if reg.kind == "logical":
            stab_component("S", g.registers[0])
            if policy.twirl:
                comps.append(Component("Lh", list(logical_weyls(reg.code))))
            stab_component("S'", g.registers[0])

    elif g.kind == READOUT_MEASUREMENT:
        if policy.measurement_rc:
            comps.append(Component("x", list(range(d))))
            comps.append(Component("z", list(range(d))))
            comps.append(Component("z'", list(range(d))))

    return comps


def _single_logical_code(circuit, g):
    codes = [
        circuit.register(name).code
        for name in g.registers
        if circuit.register(name).kind == "logical"
    ]
    if len(codes) != 1:
        raise CompileError(
            "a nontrivial twirl group requires a single-register unitary gadget"
        )
    return codes[0]


def _require_t_gadget(circuit, g):
    footprint = circuit.footprint(g)
    if circuit.d != 2 or len(footprint) != 1 or g.matrix is None:
        raise CompileError("the dihedral twirl applies to single-qubit T gadgets")
    T = t_gate_matrix()
    overlap = abs(np.trace(g.matrix @ T.conj().T)) / 2
    if abs(overlap - 1.0) > 1e-10:
        raise CompileError("the dihedral twirl applies only to gadgets implementing T")


# -- realization --------------------------------------------------------------


def _ideal_unitary_matrix(circuit, g):
    if g.weyl is not None:
        return g.weyl.to_matrix()
    return np.asarray(g.matrix)


def _merge_weyl_layers(reg_names, ops):
    """Single merged Weyl layer for the operator product ops[0]*ops[1]*...

    The product is an operator product: the last element is applied first.
    """
    acc = None
    for op in ops:
        acc = op if acc is None else acc.mul(op)
    if acc is None or acc.is_identity(ignore_phase=True):
        return ()
    return (Layer(reg_names, weyl=acc),)


def _unitary_correction_layers(circuit, g, G, s_after: dict):
    """Layers for the after box: stabilizers composed onto U G^dagger U^dagger.

    Returns the time-ordered layer tuple.  s_after maps register name to the
    drawn stabilizer (possibly empty).
    """
    d = circuit.d
    reg_names = g.registers

    def stab_layers():
        out = []
        for name in reg_names:
            s = s_after.get(name)
            if s is not None:
                out.extend(_merge_weyl_layers((name,), [s]))
        return tuple(out)

    if G is None:
        return stab_layers()

    if isinstance(G, WeylOperator) and g.weyl is not None:
        # U G^dagger U^dagger = conj(braid(U, G^dagger)) * G^dagger, exactly.
        gd = G.dagger()
        from .weyl import braiding_phase

        phase = braiding_phase(g.weyl, gd)
        corr = WeylOperator(d, gd.x, gd.z, gd.phase_exp - phase.exp)
        if len(reg_names) == 1 and reg_names[0] in s_after:
            merged = _merge_weyl_layers(reg_names, [s_after[reg_names[0]], corr])
            return merged
        return _merge_weyl_layers(reg_names, [corr]) + stab_layers()

    U = _ideal_unitary_matrix(circuit, g)
    if isinstance(G, WeylOperator):
        Gm = G.to_matrix()
        label = "twirl-correction"
    elif isinstance(G, tuple):  # dihedral (r, L)
        r, L = G
        Gm = _rotation_power(r) @ L.to_matrix()
        label = "twirl-correction"
    else:
        Gm = np.asarray(G)
        label = "twirl-correction"
    corr = U @ Gm.conj().T @ U.conj().T
    n_sites = len(circuit.footprint(g))
    rec = weyl_from_matrix(corr, d, n_sites)
    if rec is not None:
        if len(reg_names) == 1 and reg_names[0] in s_after:
            return _merge_weyl_layers(reg_names, [s_after[reg_names[0]], rec])
        return _merge_weyl_layers(reg_names, [rec]) + stab_layers()
    return (Layer(reg_names, matrix=corr, label=label),) + stab_layers()


def _before_twirl_layers(reg_names, G, s_before):
    """Layers for the before box: G composed onto the drawn stabilizers."""
    if G is None:
        out = []
        for name in reg_names:
            s = s_before.get(name)
            if s is not None:
                out.extend(_merge_weyl_layers((name,), [s]))
        return tuple(out)
    if isinstance(G, WeylOperator):
        if len(reg_names) == 1 and reg_names[0] in s_before:
            return _merge_weyl_layers(reg_names, [G, s_before[reg_names[0]]])
        pre = []
        for name in reg_names:
            s = s_before.get(name)
            if s is not None:
                pre.extend(_merge_weyl_layers((name,), [s]))
        return tuple(pre) + _merge_weyl_layers(reg_names, [G])
    if isinstance(G, tuple):  # dihedral (r, L): operator R * L * S
        r, L = G
        s = s_before.get(reg_names[0])
        layers = _merge_weyl_layers(reg_names, [L, s] if s is not None else [L])
        if r % 4:
            layers = layers + (Layer(reg_names, matrix=_rotation_power(r), label=f"T2^{r}"),)
        return layers
    layers = []
    s = s_before.get(reg_names[0])
    if s is not None:
        layers.extend(_merge_weyl_layers(reg_names, [s]))
    layers.append(Layer(reg_names, matrix=np.asarray(G), label="twirl"))
    return tuple(layers)


def _audit(value):
    if isinstance(value, WeylOperator):
        return value.to_string()
    if isinstance(value, tuple) and len(value) == 2 and isinstance(value[1], WeylOperator):
        return [value[0], value[1].to_string()]
    if isinstance(value, tuple):
        return list(value)
    if isinstance(value, np.ndarray):
        return "custom-unitary"
    return value


def realize_gadget(
    circuit: LogicalCircuit, index: int, draws: dict, policy: RandomizationPolicy
) -> GadgetInsertions:
    """Build the insertion record for one gadget from drawn values."""
    g = circuit.gadgets[index]
    d = circuit.d
    audit = {name: _audit(v) for name, v in draws.items()}

    if g.kind == RESET:
        s = draws.get(f"S:{g.registers[0]}")
        after = _merge_weyl_layers(g.registers, [s]) if s is not None else ()
        return GadgetInsertions(after=after, draws=audit)

    if g.kind == UNITARY:
        s_before = {
            name: draws[f"S:{name}"] for name in g.registers if f"S:{name}" in draws
        }
        s_after = {
            name: draws[f"S':{name}"] for name in g.registers if f"S':{name}" in draws
        }
        G = draws.get("G")
        before = _before_twirl_layers(g.registers, G, s_before)
        after = _unitary_correction_layers(circuit, g, G, s_after)
        return GadgetInsertions(before=before, after=after, draws=audit)

    if g.kind == MEASUREMENT:
        reg = circuit.register(g.registers[0])
        code = reg.code
        parts = []
        add = 0
        if "x" in draws or "z" in draws:
            x = draws.get("x", (0,) * code.k)
            z = draws.get("z", (0,) * code.k)
            shift = WeylOperator.identity(d, code.n)
            for i, xi in enumerate(x):
                shift = shift.mul(code.logical_x(i) ** xi)
            for i, zi in enumerate(z):
                shift = shift.mul(code.logical_z(i) ** zi)
            measured = g.weyl if g.weyl is not None else code.logical_z(0)
            add = (-braiding_exponent(shift, measured)) % d
            parts.append(shift)
        s = draws.get(f"S:{g.registers[0]}")
        ops = ([s] if s is not None else []) + parts
        before = _merge_weyl_layers(g.registers, ops) if ops else ()
        classical = {g.wire: add} if add else {}
        internal = {}
        if before:
            # Undo the inserted Weyl after the projection so the instance is
            # channel-equivalent to the bare gadget, not just classically.
            internal["restore"] = before[0].weyl.dagger()
        return GadgetInsertions(
            before=before, internal=internal, classical_add=classical, draws=audit
        )

    if g.kind == SYNDROME_EXTRACTION:
        reg = circuit.register(g.registers[0])
        A = reg.code.stab_gens[g.generator]
        internal: dict = {}
        classical: dict = {}
        s = draws.get(f"S:{g.registers[0]}")
        before = _merge_weyl_layers(g.registers, [s]) if s is not None else ()
        L = draws.get("L")
        if L is not None:
            internal["enc_twirl"] = L
            internal["readout_correction"] = compute_propagation_correction(A, L).dagger()
        P = draws.get("P")
        if P is not None:
            internal["readout_weyl"] = P
        if "x" in draws:
            internal["rc"] = (draws["x"], draws["z"])
            internal["post_z"] = draws["z'"]
            add = (-draws["x"]) % d
            if add:
                classical[g.wire] = add
        idle_pre = []
        idle_post = []
        lh = draws.get("Lh")
        if lh is not None:
            idle_pre.append(lh)
            idle_post.append(lh.dagger())
        sp = draws.get(f"S':{g.registers[0]}")
        if sp is not None:
            idle_pre.insert(0, sp)
        spp = draws.get(f"S'':{g.registers[0]}")
        if spp is not None:
            idle_post.insert(0, spp)
        if idle_pre:
            acc = idle_pre[0]
            for op in idle_pre[1:]:
                acc = acc.mul(op)
            internal["idle_before"] = acc
        if idle_post:
            acc = idle_post[0]
            for op in idle_post[1:]:
                acc = acc.mul(op)
            internal["idle_after"] = acc
        return GadgetInsertions(
            before=before, internal=internal, classical_add=classical, draws=audit
        )

    if g.kind == IDLE:
        s = draws.get(f"S:{g.registers[0]}")
        lh = draws.get("Lh")
        sp = draws.get(f"S':{g.registers[0]}")
        before_ops = [op for op in (lh, s) if op is not None]
        after_ops = []
        if sp is not None:
            after_ops.append(sp)
        if lh is not None:
            after_ops.append(lh.dagger())
        before = _merge_weyl_layers(g.registers, before_ops) if before_ops else ()
        after = _merge_weyl_layers(g.registers, after_ops) if after_ops else ()
        return GadgetInsertions(before=before, after=after, draws=audit)

    if g.kind == READOUT_MEASUREMENT:
        internal = {}
        classical = {}
        if "x" in draws:
            internal["rc"] = (draws["x"], draws["z"])
            internal["post_z"] = draws["z'"]
            add = (-draws["x"]) % d
            if add:
                classical[g.wire] = add
        return GadgetInsertions(internal=internal, classical_add=classical, draws=audit)

    raise CompileError(f"cannot compile gadget kind {g.kind!r}")


# -- single-gadget entry points -------------------------------------------------


def _draw_once(components, rng):
    if rng is None:
        rng = np.random.default_rng(DEFAULT_SEED)
    return {c.name: c.values[int(rng.integers(len(c.values)))] for c in components}


def compile_reset(circuit, index, policy, rng=None) -> GadgetInsertions:
    g = circuit.gadgets[index]
    if g.kind != RESET:
        raise CompileError(f"gadget {index} is not a reset")
    if circuit.register(g.registers[0]).kind != "logical":
        raise CompileError("stabilizer insertion applies to encoded resets")
    return realize_gadget(circuit, index, _draw_once(gadget_components(circuit, index, policy), rng), policy)


def compile_unitary(circuit, index, group: TwirlGroupSpec, policy, rng=None) -> GadgetInsertions:
    g = circuit.gadgets[index]
    if g.kind != UNITARY:
        raise CompileError(f"gadget {index} is not a unitary")
    policy = replace(policy, twirl_groups={**policy.twirl_groups, index: group})
    return realize_gadget(circuit, index, _draw_once(gadget_components(circuit, index, policy), rng), policy)


def compile_measurement(circuit, index, policy, rng=None) -> GadgetInsertions:
    g = circuit.gadgets[index]
    if g.kind != MEASUREMENT:
        raise CompileError(f"gadget {index} is not a logical measurement")
    return realize_gadget(circuit, index, _draw_once(gadget_components(circuit, index, policy), rng), policy)


def compile_syndrome_extraction(circuit, index, policy, rng=None) -> GadgetInsertions:
    g = circuit.gadgets[index]
    if g.kind != SYNDROME_EXTRACTION:
        raise CompileError(f"gadget {index} is not a syndrome extraction")
    return realize_gadget(circuit, index, _draw_once(gadget_components(circuit, index, policy), rng), policy)


# -- instantiation -------------------------------------------------------------


def draw_space_size(circuit: LogicalCircuit, policy: RandomizationPolicy) -> int:
    total = 1
    for i in range(len(circuit.gadgets)):
        for comp in gadget_components(circuit, i, policy):
            total *= len(comp.values)
    return total


def instantiate(circuit: LogicalCircuit, policy: RandomizationPolicy):
    """Stream of compiled instances, deterministic under the policy seed."""
    diags = validate(circuit)
    if diags:
        raise CompileError(f"invalid circuit: {diags[0].rule}: {diags[0].message}")
    per_gadget = [gadget_components(circuit, i, policy) for i in range(len(circuit.gadgets))]
    flat = [(gi, comp) for gi, comps in enumerate(per_gadget) for comp in comps]

    def build(draw_values, index):
        insertions = []
        classical_post: dict = {}
        for gi in range(len(circuit.gadgets)):
            draws = {
                comp.name: value
                for (gj, comp), value in zip(flat, draw_values)
                if gj == gi
            }
            ins = realize_gadget(circuit, gi, draws, policy)
            insertions.append(ins)
            classical_post.update(ins.classical_add)
        return CompiledInstance(
            base=circuit,
            insertions=tuple(insertions),
            classical_post=classical_post,
            seed=policy.seed,
            index=index,
        )

    if policy.mode == "exhaustive":
        total = 1
        for _, comp in flat:
            total *= len(comp.values)
        if total > policy.exhaustive_cap:
            raise CompileError(
                f"exhaustive draw space has {total} instances, above the cap "
                f"{policy.exhaustive_cap}"
            )
        for index, values in enumerate(
            itertools.product(*[comp.values for _, comp in flat])
        ):
            yield build(values, index)
    elif policy.mode == "sampled":
        rng = np.random.default_rng(policy.seed)
        for shot in range(policy.samples):
            values = [comp.values[int(rng.integers(len(comp.values)))] for _, comp in flat]
            yield build(values, shot)
    else:
        raise CompileError(f"unknown policy mode {policy.mode!r}")
