"""Quasi-static DC load flow for the corridor.

Every node carries a power-rail and a running-rail potential. Substations
are Norton sources between the two rails of their node, switched out when
their ideal diode would reverse-conduct. Trains are constant-power loads
linearised as current sources ``I = P / V`` and iterated to a fixed point.

A regenerating train whose voltage would exceed its chopper activation
threshold is held at that threshold (a voltage source); the regenerated
power the network does not take goes to the chopper. If that exceeds the
chopper's full-on capacity, the resistor bank is left fully on and the
node voltage floats above the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .drive import ChopperState
from .errors import InfeasibleError, SolverError
from .network import NetworkGraph
from .substation import SubstationParams

PQ, CLAMP, SATURATED, DISCONNECTED = "pq", "clamp", "saturated", "disconnected"

_EPS_I = 1e-9  # A, diode switching threshold
# A blocking diode is stamped as this tiny conductance so a network with
# every substation blocked stays non-singular. Its current is fed back from
# the previous iterate, so at convergence no current leaks.
_G_LEAK = 1e-9  # S


@dataclass(frozen=True)
class SolveResult:
    node_voltages: np.ndarray  # V, power rail minus running rail
    substation_currents: np.ndarray  # A, >= 0
    substation_voltages: np.ndarray  # V at the substation terminals
    train_powers: np.ndarray  # W, demanded (+ drawing)
    train_currents: np.ndarray  # A drawn from the network (+ drawing)
    train_voltages: np.ndarray  # V
    chopper_powers: np.ndarray  # W, >= 0
    rail_loss: float  # W, I^2 R in both rails
    aux_powers: np.ndarray  # W per substation
    residual: float  # A, max constant-power current mismatch
    iterations: int
    node_modes: tuple[str, ...]

    @property
    def substation_powers(self) -> np.ndarray:
        return self.substation_voltages * self.substation_currents


def _node_loads(graph, train_powers, substations, choppers):
    """Per-node demand, chopper conductance and activation voltage."""
    n = len(graph.nodes)
    P = np.zeros(n)
    G_ch = np.zeros(n)
    V_act = np.full(n, np.inf)
    for i, node in enumerate(graph.nodes):
        if node.substation is not None:
            P[i] += substations[node.substation].aux_load
        for k in node.trains:
            P[i] += train_powers[k]
    for i, node in enumerate(graph.nodes):
        if P[i] >= 0:
            continue
        for k in node.trains:
            ch = choppers[k] if choppers is not None else None
            if ch is not None and train_powers[k] < 0:
                G_ch[i] += ch.conductance
                V_act[i] = min(V_act[i], ch.V_act)
    return P, G_ch, V_act


def solve(graph: NetworkGraph, train_powers: Sequence[float],
          substations: Sequence[SubstationParams],
          choppers: Sequence[ChopperState | None] | None = None,
          tol: float = 0.01, max_iter: int = 200,
          v_init: Sequence[float] | None = None,
          strict_disconnect: bool = False, ideal_diode: bool = True) -> SolveResult:
    """Solve the network for one snapshot.

    ``train_powers`` are electrical powers at the train terminals (negative
    when regenerating). ``v_init`` warm-starts the node voltages.
    ``strict_disconnect`` drops an over-voltage train from the network
    entirely instead of clamping it. ``ideal_diode=False`` turns the
    substations into plain Thevenin sources (used for verification).
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    train_powers = np.asarray(train_powers, dtype=float)
    nodes = graph.nodes
    n = len(nodes)
    P, G_ch, V_act = _node_loads(graph, train_powers, substations, choppers)

    sub_node = np.empty(len(substations), dtype=int)
    for i, node in enumerate(nodes):
        if node.substation is not None:
            sub_node[node.substation] = i
    ref = n + int(sub_node[0])  # running rail of the first substation is ground

    # Branch conductance stamps are fixed for the snapshot.
    G0 = np.zeros((2 * n, 2 * n))
    for br in graph.branches:
        for off, R in ((0, br.R_power), (n, br.R_traction)):
            g = 1.0 / R
            a, b = br.a + off, br.b + off
            G0[a, a] += g
            G0[b, b] += g
            G0[a, b] -= g
            G0[b, a] -= g
    keep = np.array([j for j in range(2 * n) if j != ref])

    V = (np.asarray(v_init, dtype=float).copy() if v_init is not None
         else np.full(n, max(s.V0 for s in substations)))
    modes = [PQ] * n
    active = np.ones(len(substations), dtype=bool)
    residual = math.inf

    for it in range(1, max_iter + 1):
        # Motoring loads: current source P/V. Regenerating loads use the
        # tangent (Newton) companion, whose conductance -P/V^2 is positive
        # and keeps the iteration stable when a chopper is fully on.
        live = np.array([m in (PQ, SATURATED) for m in modes])
        Vs = np.where(V > 0, V, 1.0)
        g_load = np.where(live & (P < 0), -P / Vs ** 2, 0.0)
        I_src = np.where(live, np.where(P < 0, 2.0 * P / Vs, P / Vs), 0.0)
        clamped = [i for i in range(n) if modes[i] == CLAMP]
        size = 2 * n + len(clamped)
        A = np.zeros((size, size))
        A[:2 * n, :2 * n] = G0
        rhs = np.zeros(size)
        for s, sub in enumerate(substations):
            u, w = sub_node[s], n + sub_node[s]
            g = 1.0 / sub.R_th if active[s] else _G_LEAK
            A[u, u] += g
            A[w, w] += g
            A[u, w] -= g
            A[w, u] -= g
            e = sub.V0 if active[s] else V[sub_node[s]]
            rhs[u] += e * g
            rhs[w] -= e * g
        for i in range(n):
            u, w = i, n + i
            rhs[u] -= I_src[i]
            rhs[w] += I_src[i]
            g = g_load[i] + (G_ch[i] if modes[i] == SATURATED else 0.0)
            if g:
                A[u, u] += g
                A[w, w] += g
                A[u, w] -= g
                A[w, u] -= g
        for j, i in enumerate(clamped):
            row = 2 * n + j
            A[i, row] += 1.0
            A[n + i, row] -= 1.0
            A[row, i] += 1.0
            A[row, n + i] -= 1.0
            rhs[row] = V_act[i]
        sel = np.concatenate([keep, np.arange(2 * n, size)])
        try:
            x_red = np.linalg.solve(A[np.ix_(sel, sel)], rhs[sel])
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular network matrix: {exc}") from None
        x = np.zeros(size)
        x[sel] = x_red
        V_new = x[:n] - x[n:2 * n]
        I_clamp = {i: x[2 * n + j] for j, i in enumerate(clamped)}

        if not np.all(np.isfinite(V_new)) or np.any(V_new[P > 0] <= 0):
            _raise_infeasible(graph, P, V_new, it)

        # Constant-power mismatch against the fresh voltages.
        I_load = I_src + g_load * V_new
        residual = float(np.max(np.abs(P[live] / V_new[live] - I_load[live]), initial=0.0))
        leak = _G_LEAK * np.abs(V_new[sub_node] - V[sub_node])[~active]
        residual = max(residual, float(np.max(leak, initial=0.0)))

        changed = False
        I_sub = (np.array([s.V0 for s in substations]) - V_new[sub_node]) / \
            np.array([s.R_th for s in substations])
        if ideal_diode:
            for s in range(len(substations)):
                if active[s] and I_sub[s] < -_EPS_I:
                    active[s] = False
                    changed = True
                elif not active[s] and I_sub[s] > _EPS_I:
                    active[s] = True
                    changed = True
        for i in range(n):
            mode = modes[i]
            if mode == PQ and P[i] < 0 and V_new[i] > V_act[i]:
                modes[i] = DISCONNECTED if strict_disconnect else CLAMP
            elif mode == CLAMP:
                to_chopper = -P[i] + V_act[i] * I_clamp[i]
                if to_chopper < 0:
                    modes[i] = PQ
                elif to_chopper > G_ch[i] * V_act[i] ** 2:
                    modes[i] = SATURATED
            elif mode == SATURATED and V_new[i] < V_act[i]:
                modes[i] = CLAMP
            changed |= modes[i] != mode
        V = V_new
        if not changed and residual < tol:
            return _package(graph, train_powers, substations, P, G_ch, V, x[:2 * n],
                            I_load, I_clamp, active, modes, residual, it, I_sub)

    if np.any(V[P > 0] < 0.5 * min(s.V0 for s in substations)):
        _raise_infeasible(graph, P, V, max_iter)
    raise SolverError(f"network solve did not converge in {max_iter} iterations "
                      f"(residual {residual:.3g} A)", residual)


def _raise_infeasible(graph, P, V, it):
    V = np.where(np.isfinite(V), V, -np.inf)
    loads = [i for i in range(len(P)) if P[i] > 0]
    worst = min(loads, key=lambda i: V[i]) if loads else int(np.argmin(V))
    trains = graph.nodes[worst].trains
    who = f"train {trains[0]}" if trains else f"node {worst}"
    raise InfeasibleError(
        f"load at {who} exceeds what the network can deliver "
        f"(voltage collapse at iteration {it}, t={graph.t} s)",
        train=trains[0] if trains else None)


def _package(graph, train_powers, substations, P, G_ch, V, potentials, I_load, I_clamp,
             active, modes, residual, it, I_sub):
    n = len(graph.nodes)
    I_node = I_load.copy()
    node_chopper = np.zeros(n)
    for i in range(n):
        if modes[i] == CLAMP:
            I_node[i] = I_clamp[i]
            node_chopper[i] = -P[i] + V[i] * I_clamp[i]
        elif modes[i] == SATURATED:
            node_chopper[i] = G_ch[i] * V[i] ** 2
            I_node[i] += node_chopper[i] / V[i]
        elif modes[i] == DISCONNECTED:
            node_chopper[i] = -P[i]

    # round-off negatives on a conducting diode read as zero
    I_sub = np.where(active, np.where(np.abs(I_sub) <= _EPS_I, 0.0, I_sub), 0.0)
    V_sub = np.array([V[graph.substation_node(s)] for s in range(len(substations))])
    aux = np.array([s.aux_load for s in substations], dtype=float)

    n_tr = len(train_powers)
    train_V = np.zeros(n_tr)
    train_I = np.zeros(n_tr)
    chop = np.zeros(n_tr)
    for i, node in enumerate(graph.nodes):
        if not node.trains:
            continue
        regen = [k for k in node.trains if train_powers[k] < 0]
        total_regen = -sum(train_powers[k] for k in regen)
        for k in node.trains:
            train_V[k] = V[i]
            if node_chopper[i] > 0 and train_powers[k] < 0 and total_regen > 0:
                chop[k] = node_chopper[i] * (-train_powers[k]) / total_regen
            train_I[k] = (train_powers[k] + chop[k]) / V[i]

    n_nodes = len(graph.nodes)
    loss = 0.0
    for br in graph.branches:
        du = potentials[br.a] - potentials[br.b]
        dw = potentials[n_nodes + br.a] - potentials[n_nodes + br.b]
        loss += du * du / br.R_power + dw * dw / br.R_traction
    return SolveResult(
        node_voltages=V, substation_currents=I_sub, substation_voltages=V_sub,
        train_powers=np.asarray(train_powers, dtype=float), train_currents=train_I,
        train_voltages=train_V, chopper_powers=chop, rail_loss=loss, aux_powers=aux,
        residual=residual, iterations=it, node_modes=tuple(modes))



def receptivity_split(result: SolveResult, train: int) -> tuple[float, float]:
    """``(to_network, to_chopper)`` in W for a regenerating train.

    The two parts sum to the train's regenerated power."""
    P = float(result.train_powers[train])
    if P >= 0:
        raise ValueError(f"train {train} is not regenerating (P = {P:.6g} W)")
    to_chopper = min(float(result.chopper_powers[train]), -P)
    return -P - to_chopper, to_chopper
