from __future__ import annotations

import numpy as np
import pytest

from oracles import hamiltonian
from spinquench.model import (
    ORACLE_MAX_SITES,
    DisorderSpec,
    InitialKind,
    InitialState,
    ModelParams,
    build_case,
    hamiltonian_matrix,
    initial_statevector,
    total_sz,
)
from spinquench.observables import n_half


def test_case_one_is_uniform_xx():
    p = build_case("I", 6, J=1.0)
    assert p.fields == (0.0,) * 6 and p.interaction == 0 and p.hopping == 1.0


def test_case_four_linear_potential():
    p = build_case("IV", 4, h=1.5)
    assert p.fields == (1.5, 3.0, 4.5, 6.0)


def test_case_two_reproducible_and_bounded():
    a = build_case("II", 6, h=2.0, seed=42)
    b = build_case("II", 6, h=2.0, seed=42)
    assert a == b
    assert all(abs(x) <= 2.0 for x in a.fields)
    assert build_case("II", 6, h=2.0, seed=43) != a


def test_disorder_mean_over_many_seeds():
    h, n = 2.0, 6
    draws = np.array([DisorderSpec(h, s).sample(n) for s in range(10_000)])
    assert np.all(np.abs(draws) <= h)
    sigma = h / np.sqrt(3) / np.sqrt(draws.size)
    assert abs(draws.mean()) < 3 * sigma


@pytest.mark.parametrize("kwargs", [
    dict(case="I", U=0.5), dict(case="I", h=1.0), dict(case="II", U=1.0, seed=1),
    dict(case="III", h=0.3), dict(case="IV", U=-1.0), dict(case="II", h=1.0),
])
def test_contradictory_inputs_rejected(kwargs):
    case = kwargs.pop("case")
    with pytest.raises(ValueError):
        build_case(case, 4, **kwargs)


def test_params_invariants():
    with pytest.raises(ValueError):
        ModelParams(1, 1.0, 0.0, (0.0,))
    with pytest.raises(ValueError):
        ModelParams(3, 1.0, 0.0, (0.0, 0.0))


def test_two_site_spectrum():
    # Brute-force 4x4 diagonalization: {-2, 2} from the S_z = 0 sector, {0, 0} elsewhere.
    eig = np.linalg.eigvalsh(hamiltonian_matrix(build_case("I", 2)))
    assert np.allclose(sorted(eig), [-2, 0, 0, 2], atol=1e-12)


@pytest.mark.parametrize("case,kw", [("I", {}), ("II", dict(h=1.3, seed=5)),
                                      ("III", dict(U=0.7)), ("IV", dict(U=0.4, h=0.9))])
def test_hamiltonian_matches_kron_oracle(case, kw):
    p = build_case(case, 5, J=0.8, **kw)
    h = hamiltonian_matrix(p)
    assert np.max(np.abs(h - hamiltonian(5, p.hopping, p.interaction, p.fields))) < 1e-12
    assert np.max(np.abs(h - h.conj().T)) == 0
    sz = total_sz(5)
    assert np.max(np.abs(h @ sz - sz @ h)) < 1e-12


def test_oracle_cap():
    with pytest.raises(ValueError):
        hamiltonian_matrix(build_case("I", ORACLE_MAX_SITES + 1))


def test_initial_states():
    dw = InitialState.domain_wall(2)
    assert dw.kind is InitialKind.DomainWall and dw.bitstring == "10"  # down, up
    psi = initial_statevector(dw, 2)
    assert np.count_nonzero(psi) == 1 and psi[0b10] == 1
    assert InitialState.neel(3).bitstring == "010"  # up, down, up
    assert InitialState.domain_wall(6).bitstring == "111000"
    with pytest.raises(ValueError):
        InitialState.domain_wall(5)
    for init in (InitialState.neel(5), InitialState.from_bits("0110")):
        psi = initial_statevector(init, len(init.pattern))
        assert np.isclose(np.sum(np.abs(psi) ** 2), 1.0)
    with pytest.raises(ValueError):
        initial_statevector(InitialState.neel(3), 4)


def test_domain_wall_has_zero_n_half():
    init = InitialState.domain_wall(6)
    assert n_half(initial_statevector(init, 6)) == 0
    assert init.sz == 0


def test_named_states():
    assert InitialState.named("domain_wall", 4).bitstring == "1100"
    assert InitialState.named("Neel", 4).bitstring == "0101"
    assert InitialState.named("0011", 4).kind is InitialKind.Bitstring
    with pytest.raises(ValueError):
        InitialState.named("001", 4)
