"""AC network dispatch under uncertain line admittances (IEEE 14-bus by default)."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .. import grad as ad
from .base import Environment, GaussianPrior, NonFiniteState


@dataclass(frozen=True)
class GridCase:
    """Network data in per-unit; bus indices are zero-based, angles in radians."""

    bus_type: np.ndarray  # 1 = load (PQ), 2 = generator (PV), 3 = slack
    pd: np.ndarray
    qd: np.ndarray
    gs: np.ndarray
    bs: np.ndarray
    vm: np.ndarray
    va: np.ndarray
    vmax: np.ndarray
    vmin: np.ndarray
    gen_bus: np.ndarray
    pg: np.ndarray
    br_from: np.ndarray
    br_to: np.ndarray
    r: np.ndarray
    x: np.ndarray
    b: np.ndarray
    tap: np.ndarray
    limit: np.ndarray

    def __post_init__(self):
        if np.count_nonzero(self.bus_type == 3) != 1:
            raise ValueError("a case needs exactly one slack bus")
        if np.any((self.r == 0) & (self.x == 0)):
            raise ValueError("branch with zero impedance")
        if not _connected(self.n_bus, self.br_from, self.br_to):
            raise ValueError("network is not connected")

    @property
    def n_bus(self) -> int:
        return len(self.bus_type)

    @property
    def n_branch(self) -> int:
        return len(self.br_from)

    @property
    def n_gen(self) -> int:
        return len(self.gen_bus)

    @property
    def slack(self) -> int:
        return int(np.flatnonzero(self.bus_type == 3)[0])


def _connected(n, f, t) -> bool:
    seen, stack = {0}, [0]
    adj = [[] for _ in range(n)]
    for a, b in zip(f, t):
        adj[a].append(b)
        adj[b].append(a)
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == n


def parse_case(text: str) -> GridCase:
    """Parse a case file: ``base_mva,<value>`` plus ``[bus]``, ``[gen]`` and
    ``[branch]`` sections, each a CSV table with a header row. ``#`` starts a
    comment. A zero ``tap`` means a plain line (ratio 1)."""
    sections: dict[str, list[str]] = {"": []}
    current = ""
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            sections[current] = []
        else:
            sections[current].append(line)
    base = 100.0
    for line in sections[""]:
        key, val = (s.strip() for s in line.split(",", 1))
        if key == "base_mva":
            base = float(val)
    tables = {}
    for name in ("bus", "gen", "branch"):
        if name not in sections:
            raise ValueError(f"case file lacks a [{name}] section")
        rows = list(csv.DictReader(io.StringIO("\n".join(sections[name]))))
        tables[name] = {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}
    bus, gen, br = tables["bus"], tables["gen"], tables["branch"]
    order = np.argsort(bus["bus"])
    if not np.array_equal(bus["bus"][order], np.arange(1, len(order) + 1)):
        raise ValueError("buses must be numbered 1..n")
    bus = {k: v[order] for k, v in bus.items()}
    return GridCase(
        bus_type=bus["type"].astype(int), pd=bus["pd_mw"] / base, qd=bus["qd_mvar"] / base,
        gs=bus["gs_mw"] / base, bs=bus["bs_mvar"] / base, vm=bus["vm"], va=np.deg2rad(bus["va_deg"]),
        vmax=bus["vmax"], vmin=bus["vmin"],
        gen_bus=gen["bus"].astype(int) - 1, pg=gen["pg_mw"] / base,
        br_from=br["from"].astype(int) - 1, br_to=br["to"].astype(int) - 1,
        r=br["r"], x=br["x"], b=br["b"], tap=np.where(br["tap"] == 0, 1.0, br["tap"]),
        limit=br["limit_pu"],
    )


def load_case(path: str | Path | None = None) -> GridCase:
    """Load a case file; without a path, the bundled IEEE 14-bus case."""
    if path is None:
        text = resources.files(__package__).joinpath("data", "ieee14.case").read_text()
    else:
        text = Path(path).read_text()
    return parse_case(text)


def branch_admittances(case: GridCase) -> dict[str, np.ndarray]:
    """Pi-model 2-port entries of every branch."""
    ys = 1.0 / (case.r + 1j * case.x)
    half = 1j * case.b / 2
    return {"ff": (ys + half) / case.tap ** 2, "ft": -ys / case.tap,
            "tf": -ys / case.tap, "tt": ys + half}


def admittance_stack(case: GridCase) -> tuple[np.ndarray, np.ndarray]:
    """Per-branch contributions ``Y_k`` (m, n, n) and the shunt diagonal ``Y0``;
    with branch ``k`` scaled by ``s_k`` the bus admittance is ``Y0 + sum_k s_k Y_k``."""
    n, m = case.n_bus, case.n_branch
    y = branch_admittances(case)
    Yk = np.zeros((m, n, n), dtype=complex)
    k = np.arange(m)
    f, t = case.br_from, case.br_to
    Yk[k, f, f] += y["ff"]
    Yk[k, f, t] += y["ft"]
    Yk[k, t, f] += y["tf"]
    Yk[k, t, t] += y["tt"]
    return Yk, np.diag(case.gs + 1j * case.bs)


class PowerGridEnv(Environment):
    """Relaxed AC dispatch.

    ``theta = [V (B), angles of the non-slack buses (B-1), Pg (G)]`` and
    ``phi`` holds one log admittance scaling per branch. The cost sums, in
    per-unit, the absolute active-power mismatch at every bus, the absolute
    reactive mismatch at load buses, voltage-limit violations and sending-end
    apparent-power flow-limit violations, so ``J = 0`` exactly when every
    constraint holds.
    """

    gradcheck_step = 1e-6

    def __init__(self, case: GridCase | str | None = None, phi_std=0.3, v_std=0.002,
                 angle_std=0.005, pg_std=0.01, name="power_14"):
        self.name = name
        case = case if isinstance(case, GridCase) else load_case(case)
        self.case = case
        n, m = case.n_bus, case.n_branch
        Yk, Y0 = admittance_stack(case)
        self._Gk, self._Bk = Yk.real.reshape(m, n * n), Yk.imag.reshape(m, n * n)
        self._G0, self._B0 = Y0.real, Y0.imag
        y = branch_admittances(case)
        self._yff, self._yft = y["ff"], y["ft"]
        self._gen_map = np.zeros((case.n_gen, n))
        self._gen_map[np.arange(case.n_gen), case.gen_bus] = 1.0
        self._pq = np.flatnonzero(case.bus_type == 1)
        self._others = np.delete(np.arange(n), case.slack)
        # angle vector = slack-free angles scattered into place
        self._angle_map = np.zeros((n - 1, n))
        self._angle_map[np.arange(n - 1), self._others] = 1.0
        theta0 = np.concatenate([case.vm, case.va[self._others] - case.va[case.slack], case.pg])
        std = np.concatenate([np.full(n, v_std), np.full(n - 1, angle_std), np.full(case.n_gen, pg_std)])
        self.prior_theta = GaussianPrior(theta0, std)
        self.prior_phi = GaussianPrior(np.zeros(m), phi_std)
        self.params = dict(phi_std=float(phi_std), v_std=float(v_std), angle_std=float(angle_std),
                           pg_std=float(pg_std))

    def split(self, theta):
        n = self.case.n_bus
        V = theta[..., :n]
        angles = ad.matmul(theta[..., n:2 * n - 1], self._angle_map)
        return V, angles, theta[..., 2 * n - 1:]

    def flows(self, theta, phi):
        """Bus injections ``P``/``Q``, voltages, dispatch and branch apparent power."""
        self.check_dims(theta, phi)
        V, ang, pg = self.split(theta)
        if np.any(ad.value(V) <= 0):
            raise NonFiniteState("bus voltage magnitudes must be positive")
        n = self.case.n_bus
        s = ad.exp(phi)
        G = ad.reshape(ad.matmul(s, self._Gk), np.shape(s)[:-1] + (n, n)) + self._G0
        B = ad.reshape(ad.matmul(s, self._Bk), np.shape(s)[:-1] + (n, n)) + self._B0
        delta = ad.reshape(ang, np.shape(ang)[:-1] + (n, 1)) - ad.reshape(ang, np.shape(ang)[:-1] + (1, n))
        c, sn = ad.cos(delta), ad.sin(delta)
        VV = ad.reshape(V, np.shape(V)[:-1] + (n, 1)) * ad.reshape(V, np.shape(V)[:-1] + (1, n))
        P = ad.sum(VV * (G * c + B * sn), axis=-1)
        Q = ad.sum(VV * (G * sn - B * c), axis=-1)
        f, t = self.case.br_from, self.case.br_to
        Vf, Vt = V[..., f], V[..., t]
        dft = ang[..., f] - ang[..., t]
        gff, bff = s * self._yff.real, s * self._yff.imag
        gft, bft = s * self._yft.real, s * self._yft.imag
        Pf = Vf * Vf * gff + Vf * Vt * (gft * ad.cos(dft) + bft * ad.sin(dft))
        Qf = -Vf * Vf * bff + Vf * Vt * (gft * ad.sin(dft) - bft * ad.cos(dft))
        S = ad.sqrt(Pf * Pf + Qf * Qf + 1e-12)
        return {"V": V, "P": P, "Q": Q, "pg": pg, "S": S}

    def residuals(self, theta, phi) -> dict:
        """Individual constraint terms (all must be <= 0 for a feasible point)."""
        case = self.case
        fl = self.flows(theta, phi)
        p_mis = fl["P"] - (ad.matmul(fl["pg"], self._gen_map) - case.pd)
        q_mis = fl["Q"][..., self._pq] + case.qd[self._pq]
        V = fl["V"]
        return {"p_balance": ad.abs(p_mis), "q_balance": ad.abs(q_mis),
                "v_high": V - case.vmax, "v_low": case.vmin - V,
                "flow": fl["S"] - case.limit}

    def cost(self, theta, phi):
        terms = self.residuals(theta, phi)
        total = 0.0
        for key in ("p_balance", "q_balance", "v_high", "v_low", "flow"):
            total = total + ad.sum(ad.relu(terms[key]), axis=-1)
        return total
