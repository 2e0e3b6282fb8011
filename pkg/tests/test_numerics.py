"""Tensor arithmetic, autodiff, RNG, and serialization contracts."""

import math
import zlib

import mpmath
import numpy as np
import pytest
import scipy.ndimage

from helpers import check_op_gradients
from m3esr.errors import (
    ContractError,
    DimensionError,
    DomainError,
    FormatError,
)
from m3esr.numerics import (
    Rng,
    Tape,
    add,
    add_b,
    add_const,
    bcast,
    clamp,
    col,
    compare_grads,
    concat_cols,
    conv3x3,
    derive,
    elem,
    exp,
    finite_diff,
    gelu,
    layer_norm,
    matmul,
    mean_all,
    mix64,
    mse,
    mul,
    permute,
    read_checkpoint,
    read_tensor,
    reciprocal,
    reshape,
    row,
    scale,
    scale_rows,
    sigmoid,
    smul,
    softmax_rows,
    softplus,
    sub,
    sum_all,
    tensor_bytes,
    transpose,
    write_checkpoint,
    write_pgm,
    write_tensor,
)

SMOOTH_KERNEL = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]]) / 16.0


def _tape_eval(build, arrays):
    tape = Tape()
    leaves = {k: tape.leaf(v, name=k) for k, v in arrays.items()}
    return build(tape, leaves)


# ---------------------------------------------------------------------------
# forward values


def test_matmul_hand_instance():
    tape = Tape()
    a = tape.leaf([[1.0, 2.0], [3.0, 4.0]])
    b = tape.leaf([[5.0], [6.0]])
    out = matmul(a, b).val
    assert out.tolist() == [[17.0], [39.0]]


def test_matmul_identity_and_zeros():
    rng = Rng(11)
    a = rng.normal((4, 4))
    tape = Tape()
    an = tape.leaf(a)
    assert np.array_equal(matmul(an, tape.leaf(np.eye(4))).val, a)
    assert np.array_equal(
        matmul(an, tape.leaf(np.zeros((4, 3)))).val, np.zeros((4, 3))
    )


def test_matmul_brute_force_oracle():
    rng = Rng(202)
    for _ in range(20):
        n, k, p = 1 + rng.randint(5), 1 + rng.randint(5), 1 + rng.randint(5)
        a = rng.normal((n, k))
        b = rng.normal((k, p))
        want = np.zeros((n, p))
        for i in range(n):
            for j in range(p):
                acc = 0.0
                for q in range(k):
                    acc += a[i, q] * b[q, j]
                want[i, j] = acc
        tape = Tape()
        got = matmul(tape.leaf(a), tape.leaf(b)).val
        assert np.max(np.abs(got - want)) < 1e-12


def test_matmul_batched_matches_per_sample():
    rng = Rng(7)
    a = rng.normal((3, 4, 5))
    b = rng.normal((5, 2))
    tape = Tape()
    stacked = matmul(tape.leaf(a), tape.leaf(b)).val
    for i in range(3):
        single = matmul(tape.leaf(a[i]), tape.leaf(b)).val
        assert np.array_equal(stacked[i], single)


def test_matmul_shape_error_names_both_shapes():
    tape = Tape()
    with pytest.raises(DimensionError) as err:
        matmul(tape.leaf(np.zeros((2, 3))), tape.leaf(np.zeros((4, 2))))
    assert "(2, 3)" in str(err.value) and "(4, 2)" in str(err.value)


def test_softmax_reference_values():
    tape = Tape()
    out = softmax_rows(tape.leaf([[1.0, 2.0]]), 1.0).val[0]
    assert abs(out[0] - 0.268941) < 1e-6
    assert abs(out[1] - 0.731059) < 1e-6
    # independent high-precision evaluation of exp-normalize
    with mpmath.workdps(50):
        e1, e2 = mpmath.e ** 1, mpmath.e ** 2
        want = [float(e1 / (e1 + e2)), float(e2 / (e1 + e2))]
    assert np.allclose(out, want, atol=1e-15)


def test_softmax_huge_temperature_flattens():
    tape = Tape()
    out = softmax_rows(tape.leaf([[5.0, -3.0, 7.0]]), 1e9).val[0]
    assert np.max(np.abs(out - 1.0 / 3.0)) < 1e-6


def test_softmax_rows_sum_to_one_and_equivariant():
    rng = Rng(31)
    for _ in range(50):
        x = rng.normal((6, 9)) * 3.0
        tau = 0.05 + rng.uniform() * 19.0
        tape = Tape()
        y = softmax_rows(tape.leaf(x), tau).val
        assert np.max(np.abs(y.sum(axis=-1) - 1.0)) < 1e-12
        perm = rng.permutation(9)
        y2 = softmax_rows(tape.leaf(x[:, perm]), tau).val
        assert np.max(np.abs(y2 - y[:, perm])) < 1e-15


def test_softmax_temperature_monotonicity():
    x = np.array([[0.3, -1.2, 2.0, 0.9]])
    taus = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
    maxima = []
    for tau in taus:
        tape = Tape()
        maxima.append(float(softmax_rows(tape.leaf(x), tau).val.max()))
    for a, b in zip(maxima, maxima[1:]):
        assert b < a


def test_softmax_temperature_domain():
    tape = Tape()
    for tau in (0.0, -1.0, float("nan")):
        with pytest.raises(DomainError):
            softmax_rows(tape.leaf([[1.0, 2.0]]), tau)


def test_gelu_against_reference_formula():
    xs = np.linspace(-4, 4, 33)
    tape = Tape()
    got = gelu(tape.leaf(xs)).val
    want = np.array([0.5 * x * (1 + math.erf(x / math.sqrt(2))) for x in xs])
    assert np.max(np.abs(got - want)) < 1e-15


def test_sigmoid_and_softplus_extremes_stay_finite():
    tape = Tape()
    big = tape.leaf([-800.0, -20.0, 0.0, 20.0, 800.0])
    s = sigmoid(big).val
    sp = softplus(big).val
    assert np.all(np.isfinite(s)) and np.all(np.isfinite(sp))
    assert abs(s[2] - 0.5) < 1e-15 and abs(sp[2] - math.log(2.0)) < 1e-15
    assert s[0] == 0.0 and s[-1] == 1.0


def test_layer_norm_forward_reference():
    rng = Rng(5)
    x = rng.normal((4, 7))
    g = rng.normal((7,))
    b = rng.normal((7,))
    tape = Tape()
    got = layer_norm(tape.leaf(x), tape.leaf(g), tape.leaf(b)).val
    mu = x.mean(-1, keepdims=True)
    var = x.var(-1, keepdims=True)
    want = (x - mu) / np.sqrt(var + 1e-5) * g + b
    assert np.max(np.abs(got - want)) < 1e-12


def test_conv3x3_preserves_constant_images():
    tape = Tape()
    img = np.full((8, 6, 1), 0.37)
    out = conv3x3(tape.leaf(img), SMOOTH_KERNEL).val
    assert np.array_equal(out, img)


def test_conv3x3_matches_scipy_reflect():
    rng = Rng(77)
    img = rng.uniform((9, 11))
    tape = Tape()
    got = conv3x3(tape.leaf(img[:, :, None]), SMOOTH_KERNEL).val[:, :, 0]
    want = scipy.ndimage.correlate(img, SMOOTH_KERNEL, mode="mirror")
    assert np.max(np.abs(got - want)) < 1e-14


def test_values_finite_after_public_ops():
    rng = Rng(13)
    tape = Tape(check_finite=True)
    x = tape.leaf(rng.normal((5, 8)) * 5.0)
    y = softmax_rows(gelu(x), 0.05)
    z = layer_norm(y, tape.leaf(np.ones(8)), tape.leaf(np.zeros(8)))
    out = mse(sigmoid(z), rng.uniform((5, 8)))
    assert np.isfinite(float(out.val))


# ---------------------------------------------------------------------------
# gradients


def test_backward_of_sum_is_ones():
    tape = Tape()
    x = tape.leaf(np.arange(6.0).reshape(2, 3), name="x")
    grads = tape.backward(sum_all(x))
    assert np.array_equal(grads["x"], np.ones((2, 3)))


def test_detached_parameter_gets_zero_gradient():
    tape = Tape()
    x = tape.leaf(np.ones((2, 2)), name="x")
    y = tape.leaf(np.ones((2, 2)), name="y")
    grads = tape.backward(sum_all(mul(x, x)))
    assert np.array_equal(grads["y"], np.zeros((2, 2)))
    assert np.array_equal(grads["x"], 2 * np.ones((2, 2)))


def test_backward_rejects_non_scalar_root():
    tape = Tape()
    x = tape.leaf(np.ones((2, 2)), name="x")
    with pytest.raises(ContractError):
        tape.backward(add(x, x))


def test_shared_subexpression_gradients_accumulate_correctly():
    # f(x) = sum(x + x); both addends alias the same node
    tape = Tape()
    x = tape.leaf(np.array([1.0, 2.0]), name="x")
    grads = tape.backward(sum_all(add(x, x)))
    assert np.array_equal(grads["x"], np.array([2.0, 2.0]))


def test_three_layer_stack_matches_central_differences():
    rng = Rng(99)
    n, k = 5, 6
    params = {
        "w1": rng.normal((k, k)) * 0.5,
        "b1": rng.normal((k,)) * 0.1,
        "w2": rng.normal((k, k)) * 0.5,
        "g": 1.0 + rng.normal((k,)) * 0.1,
        "b": rng.normal((k,)) * 0.1,
        "w3": rng.normal((k, 3)) * 0.5,
    }
    x = rng.normal((n, k))
    t = rng.normal((n, 3))

    def build(tape, lv):
        h1 = gelu(add_b(matmul(tape.const(x), lv["w1"]), lv["b1"]))
        h2 = layer_norm(matmul(h1, lv["w2"]), lv["g"], lv["b"])
        return mse(matmul(h2, lv["w3"]), t)

    err = check_op_gradients(build, params)
    assert err < 1e-6, f"three-layer stack gradient error {err}"


OP_CASES = {}


def op_case(name):
    def deco(fn):
        OP_CASES[name] = fn
        return fn

    return deco


@op_case("matmul")
def _case_matmul(rng):
    p = {"a": rng.normal((4, 5)), "b": rng.normal((5, 3))}
    return lambda tape, lv: sum_all(mul(matmul(lv["a"], lv["b"]), matmul(lv["a"], lv["b"]))), p


@op_case("matmul_stacked")
def _case_matmul_stacked(rng):
    p = {"a": rng.normal((3, 4, 5)), "b": rng.normal((5, 3))}
    c = rng.normal((3, 3, 2))
    return (
        lambda tape, lv: sum_all(
            mul(matmul(matmul(lv["a"], lv["b"]), tape.const(c)), matmul(lv["a"], lv["b"]) @ tape.const(c))
        ),
        p,
    )


@op_case("add_sub_mul")
def _case_add(rng):
    p = {"a": rng.normal((3, 4)), "b": rng.normal((3, 4))}
    return lambda tape, lv: sum_all(mul(add(lv["a"], lv["b"]), sub(lv["a"], lv["b"]))), p


@op_case("add_b")
def _case_add_b(rng):
    p = {"x": rng.normal((3, 4, 2)), "p": rng.normal((4, 2))}
    return lambda tape, lv: mse(add_b(lv["x"], lv["p"]), np.zeros((3, 4, 2))), p


@op_case("smul_reciprocal")
def _case_smul(rng):
    p = {"x": rng.normal((4, 3)), "s": 0.5 + rng.uniform((1,))}
    return lambda tape, lv: sum_all(mul(smul(lv["x"], reciprocal(lv["s"])), lv["x"])), p


@op_case("scale_shift")
def _case_scale(rng):
    p = {"x": rng.normal((5,))}
    return lambda tape, lv: sum_all(mul(add_const(scale(lv["x"], -1.7), 0.3), lv["x"])), p


@op_case("sigmoid")
def _case_sigmoid(rng):
    p = {"x": rng.normal((4, 4))}
    return lambda tape, lv: mse(sigmoid(lv["x"]), np.zeros((4, 4))), p


@op_case("softplus_exp")
def _case_softplus(rng):
    p = {"x": rng.normal((3, 3))}
    return lambda tape, lv: sum_all(exp(scale(softplus(lv["x"]), -1.0))), p


@op_case("gelu")
def _case_gelu(rng):
    p = {"x": rng.normal((4, 5))}
    return lambda tape, lv: mse(gelu(lv["x"]), np.ones((4, 5))), p


@op_case("softmax_rows")
def _case_softmax(rng):
    p = {"x": rng.normal((4, 6))}
    t = rng.uniform((4, 6))
    tau = 0.4 + rng.uniform()
    return lambda tape, lv: mse(softmax_rows(lv["x"], tau), t), p


@op_case("layer_norm")
def _case_layer_norm(rng):
    p = {
        "x": rng.normal((3, 4, 5)),
        "g": 1.0 + 0.2 * rng.normal((5,)),
        "b": 0.1 * rng.normal((5,)),
    }
    t = rng.normal((3, 4, 5))
    return lambda tape, lv: mse(layer_norm(lv["x"], lv["g"], lv["b"]), t), p


@op_case("mse_both_sides")
def _case_mse(rng):
    p = {"a": rng.normal((3, 4)), "b": rng.normal((3, 4))}
    return lambda tape, lv: mse(lv["a"], lv["b"]), p


@op_case("mean_all")
def _case_mean(rng):
    p = {"x": rng.normal((2, 3, 4))}
    return lambda tape, lv: mean_all(mul(lv["x"], lv["x"])), p


@op_case("transpose_reshape_permute")
def _case_shapes(rng):
    p = {"x": rng.normal((2, 3, 4))}
    t = rng.normal((4, 6))
    return (
        lambda tape, lv: mse(reshape(permute(transpose(lv["x"]), (1, 0, 2)), (4, 6)), t),
        p,
    )


@op_case("concat_cols")
def _case_concat(rng):
    p = {"a": rng.normal((4, 3)), "b": rng.normal((4, 2))}
    t = rng.normal((4, 5))
    return lambda tape, lv: mse(concat_cols(lv["a"], lv["b"]), t), p


@op_case("row_col_elem_bcast")
def _case_select(rng):
    p = {"x": rng.normal((4, 5)), "v": rng.normal((6,))}
    return (
        lambda tape, lv: sum_all(
            mul(row(lv["x"], 2), row(lv["x"], 2))
        )
        + sum_all(mul(col(lv["x"], 1), col(lv["x"], 1)))
        + sum_all(mul(bcast(elem(lv["v"], 3), (7,)), bcast(elem(lv["v"], 3), (7,)))),
        p,
    )


@op_case("scale_rows")
def _case_scale_rows(rng):
    p = {"x": rng.normal((2, 5, 3)), "w": rng.normal((2, 5))}
    t = rng.normal((2, 5, 3))
    return lambda tape, lv: mse(scale_rows(lv["x"], lv["w"]), t), p


@op_case("clamp_interior")
def _case_clamp(rng):
    # keep samples away from the clamp boundaries so the derivative exists
    p = {"x": 0.4 * rng.normal((4, 4))}
    return lambda tape, lv: mse(clamp(lv["x"], -3.0, 3.0), np.zeros((4, 4))), p


@op_case("conv3x3")
def _case_conv(rng):
    p = {"x": rng.normal((5, 6, 2))}
    t = rng.normal((5, 6, 2))
    return lambda tape, lv: mse(conv3x3(lv["x"], SMOOTH_KERNEL), t), p


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_primitive_op_gradients(name):
    # zlib.crc32 is stable across processes, unlike str hashing
    tag = zlib.crc32(name.encode()) & 0xFFFF
    worst = 0.0
    for trial in range(8):
        rng = Rng(derive(1000 + trial, tag))
        build, params = OP_CASES[name](rng)
        worst = max(worst, check_op_gradients(build, params))
    assert worst < 1e-6, f"{name}: gradient error {worst}"


# ---------------------------------------------------------------------------
# rng


def test_rng_scalar_and_bulk_agree():
    r1, r2 = Rng(5), Rng(5)
    bulk = r1.fill_u64(16).tolist()
    scal = [r2.u64() for _ in range(16)]
    assert bulk == scal


def test_rng_reference_implementation():
    # independent pure-python splitmix64, written from the algorithm
    mask = (1 << 64) - 1

    def ref_next(state):
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        z = z ^ (z >> 31)
        return state, z

    state = 42
    want = []
    for _ in range(8):
        state, z = ref_next(state)
        want.append(z)
    r = Rng(42)
    assert [r.u64() for _ in range(8)] == want
    assert mix64(0) == 0  # finalizer fixed point at zero


def test_rng_identical_seeds_identical_streams():
    a = Rng(123456789)
    b = Rng(123456789)
    assert np.array_equal(a.uniform((100,)), b.uniform((100,)))
    assert np.array_equal(a.normal((100,)), b.normal((100,)))


def test_rng_uniform_range_and_normal_moments():
    r = Rng(31337)
    u = r.uniform((20000,))
    assert np.all(u >= 0.0) and np.all(u < 1.0)
    assert abs(u.mean() - 0.5) < 0.01
    z = r.normal((20000,))
    assert abs(z.mean()) < 0.03 and abs(z.std() - 1.0) < 0.03


def test_rng_permutation_and_derive():
    r = Rng(9)
    perm = r.permutation(50)
    assert sorted(perm.tolist()) == list(range(50))
    assert derive(1, 2, 3) != derive(1, 3, 2)
    assert derive(7) == 7


# ---------------------------------------------------------------------------
# serialization


def test_tensor_round_trip_bit_exact(tmp_path):
    rng = Rng(55)
    for shape in [(3,), (2, 5), (2, 3, 4), ()]:
        arr = rng.normal(shape) if shape else np.array(1.5)
        path = tmp_path / "t.m3t"
        write_tensor(path, arr)
        back = read_tensor(path)
        assert back.shape == arr.shape
        assert np.array_equal(back, arr)


def test_tensor_header_layout():
    arr = np.arange(6.0).reshape(2, 3)
    raw = tensor_bytes(arr)
    assert raw[:4] == b"M3T1"
    assert int.from_bytes(raw[4:8], "little") == 2
    assert int.from_bytes(raw[8:12], "little") == 2
    assert int.from_bytes(raw[12:16], "little") == 3
    assert np.frombuffer(raw[16:], dtype="<f8").tolist() == arr.reshape(-1).tolist()


def test_tensor_format_errors(tmp_path):
    path = tmp_path / "bad.m3t"
    path.write_bytes(b"XXXX" + b"\x00" * 8)
    with pytest.raises(FormatError):
        read_tensor(path)
    path.write_bytes(tensor_bytes(np.ones((2, 2)))[:-4])
    with pytest.raises(FormatError):
        read_tensor(path)
    path.write_bytes(tensor_bytes(np.ones((2, 2))) + b"!!")
    with pytest.raises(FormatError):
        read_tensor(path)


def test_pgm_bytes(tmp_path):
    img = np.array([[0.0, 1.0], [0.5, 0.25]])
    path = tmp_path / "img.pgm"
    write_pgm(path, img)
    raw = path.read_bytes()
    assert raw == b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64])


def test_checkpoint_round_trip_and_determinism(tmp_path):
    rng = Rng(8)
    tensors = {
        "expert.seg.w_q": rng.normal((4, 4)),
        "embed.proj": rng.normal((16, 8)),
        "static.w_raw": rng.normal((4,)),
    }
    meta = {"variant": "static", "seed": 3, "train_seeds": [1, 2, 3]}
    p1 = tmp_path / "a.ckpt"
    p2 = tmp_path / "b.ckpt"
    write_checkpoint(p1, tensors, meta)
    write_checkpoint(p2, tensors, meta)
    assert p1.read_bytes() == p2.read_bytes()
    back, meta2 = read_checkpoint(p1)
    assert meta2 == meta
    assert set(back) == set(tensors)
    for k in tensors:
        assert np.array_equal(back[k], tensors[k])


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(FormatError):
        read_checkpoint(path)
