"""Minimal layer library over flat parameter dicts.

Each layer owns named float64 tensors inside a shared dict (checkpoint and
optimizer friendly), returns a cache from forward, and consumes it in
backward while accumulating parameter gradients into a grads dict. ELU is
used instead of ReLU for hidden activations: it is C1 at zero, which keeps
central-difference gradient checks clean.
"""
from __future__ import annotations

import numpy as np


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(x))


def elu_grad_from_output(y: np.ndarray) -> np.ndarray:
    # f'(x) = 1 for x>0 else exp(x) = y + 1
    return np.where(y > 0, 1.0, y + 1.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Conv3x3:
    """3x3 convolution over (channels, T, B) with 'same' zero padding."""

    def __init__(self, name: str, c_in: int, c_out: int):
        self.name = name
        self.c_in = c_in
        self.c_out = c_out

    def init(self, params: dict, rng: np.random.Generator):
        scale = np.sqrt(2.0 / (self.c_in * 9))
        params[f"{self.name}.w"] = rng.normal(0.0, scale, size=(self.c_out, self.c_in, 3, 3))
        params[f"{self.name}.b"] = np.zeros(self.c_out)

    def forward(self, params: dict, x: np.ndarray):
        c, t, b = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
        cols = np.empty((c, 3, 3, t, b))
        for di in range(3):
            for dj in range(3):
                cols[:, di, dj] = xp[:, di : di + t, dj : dj + b]
        cols2 = cols.reshape(c * 9, t * b)
        w = params[f"{self.name}.w"].reshape(self.c_out, c * 9)
        y = (w @ cols2 + params[f"{self.name}.b"][:, None]).reshape(self.c_out, t, b)
        return y, (cols2, (c, t, b))

    def backward(self, params: dict, cache, dy: np.ndarray, grads: dict):
        cols2, (c, t, b) = cache
        dyf = dy.reshape(self.c_out, t * b)
        grads[f"{self.name}.w"] += (dyf @ cols2.T).reshape(self.c_out, c, 3, 3)
        grads[f"{self.name}.b"] += dyf.sum(axis=1)
        w = params[f"{self.name}.w"].reshape(self.c_out, c * 9)
        dcols = (w.T @ dyf).reshape(c, 3, 3, t, b)
        dxp = np.zeros((c, t + 2, b + 2))
        for di in range(3):
            for dj in range(3):
                dxp[:, di : di + t, dj : dj + b] += dcols[:, di, dj]
        return dxp[:, 1 : t + 1, 1 : b + 1]


class AvgPool2D:
    """Average pooling with independent (time, bin) factors; floor truncation."""

    def __init__(self, pool_t: int, pool_b: int):
        self.pt = pool_t
        self.pb = pool_b

    def forward(self, x: np.ndarray):
        c, t, b = x.shape
        t2, b2 = t // self.pt, b // self.pb
        trimmed = x[:, : t2 * self.pt, : b2 * self.pb]
        y = trimmed.reshape(c, t2, self.pt, b2, self.pb).mean(axis=(2, 4))
        return y, (c, t, b)

    def backward(self, cache, dy: np.ndarray):
        c, t, b = cache
        t2, b2 = dy.shape[1], dy.shape[2]
        dx = np.zeros((c, t, b))
        spread = dy[:, :, None, :, None] / (self.pt * self.pb)
        dx[:, : t2 * self.pt, : b2 * self.pb] = np.broadcast_to(
            spread, (c, t2, self.pt, b2, self.pb)
        ).reshape(c, t2 * self.pt, b2 * self.pb)
        return dx


class Linear:
    """Time-distributed affine map on (T, d_in)."""

    def __init__(self, name: str, d_in: int, d_out: int):
        self.name = name
        self.d_in = d_in
        self.d_out = d_out

    def init(self, params: dict, rng: np.random.Generator):
        scale = np.sqrt(1.0 / self.d_in)
        params[f"{self.name}.w"] = rng.normal(0.0, scale, size=(self.d_in, self.d_out))
        params[f"{self.name}.b"] = np.zeros(self.d_out)

    def forward(self, params: dict, x: np.ndarray):
        return x @ params[f"{self.name}.w"] + params[f"{self.name}.b"], x

    def backward(self, params: dict, cache, dy: np.ndarray, grads: dict):
        x = cache
        grads[f"{self.name}.w"] += x.T @ dy
        grads[f"{self.name}.b"] += dy.sum(axis=0)
        return dy @ params[f"{self.name}.w"].T


class PerTrackLinear:
    """Independent affine head per track: (T, D) -> (T, M, d_out)."""

    def __init__(self, name: str, d_in: int, n_tracks: int, d_out: int):
        self.name = name
        self.d_in = d_in
        self.m = n_tracks
        self.d_out = d_out

    def init(self, params: dict, rng: np.random.Generator):
        scale = np.sqrt(1.0 / self.d_in)
        params[f"{self.name}.w"] = rng.normal(0.0, scale, size=(self.m, self.d_in, self.d_out))
        params[f"{self.name}.b"] = np.zeros((self.m, self.d_out))

    def forward(self, params: dict, x: np.ndarray):
        y = np.einsum("td,mdo->tmo", x, params[f"{self.name}.w"]) + params[f"{self.name}.b"]
        return y, x

    def backward(self, params: dict, cache, dy: np.ndarray, grads: dict):
        x = cache
        grads[f"{self.name}.w"] += np.einsum("td,tmo->mdo", x, dy)
        grads[f"{self.name}.b"] += dy.sum(axis=0)
        return np.einsum("tmo,mdo->td", dy, params[f"{self.name}.w"])


class BiMGU:
    """Bidirectional minimal gated recurrence: (T, d_in) -> (T, 2*hidden).

    Per direction: f_t = sigmoid(x_t Wf + h_{t-1} Uf + bf),
    c_t = tanh(x_t Wc + (f_t * h_{t-1}) Uc + bc),
    h_t = (1 - f_t) * h_{t-1} + f_t * c_t.
    """

    def __init__(self, name: str, d_in: int, hidden: int):
        self.name = name
        self.d_in = d_in
        self.h = hidden

    def _dir_names(self, tag: str):
        p = f"{self.name}.{tag}"
        return f"{p}.wf", f"{p}.uf", f"{p}.bf", f"{p}.wc", f"{p}.uc", f"{p}.bc"

    def init(self, params: dict, rng: np.random.Generator):
        sx = np.sqrt(1.0 / self.d_in)
        sh = np.sqrt(1.0 / self.h)
        for tag in ("fwd", "bwd"):
            wf, uf, bf, wc, uc, bc = self._dir_names(tag)
            params[wf] = rng.normal(0.0, sx, size=(self.d_in, self.h))
            params[uf] = rng.normal(0.0, sh, size=(self.h, self.h))
            params[bf] = np.zeros(self.h)
            params[wc] = rng.normal(0.0, sx, size=(self.d_in, self.h))
            params[uc] = rng.normal(0.0, sh, size=(self.h, self.h))
            params[bc] = np.zeros(self.h)

    def _run_dir(self, params: dict, x: np.ndarray, tag: str):
        wf, uf, bf, wc, uc, bc = self._dir_names(tag)
        t_len = x.shape[0]
        hs = np.zeros((t_len + 1, self.h))
        fs = np.empty((t_len, self.h))
        cs = np.empty((t_len, self.h))
        gated = np.empty((t_len, self.h))
        xf = x @ params[wf] + params[bf]
        xc = x @ params[wc] + params[bc]
        for t in range(t_len):
            f = sigmoid(xf[t] + hs[t] @ params[uf])
            g = f * hs[t]
            c = np.tanh(xc[t] + g @ params[uc])
            hs[t + 1] = (1.0 - f) * hs[t] + f * c
            fs[t], cs[t], gated[t] = f, c, g
        return hs, fs, cs, gated

    def forward(self, params: dict, x: np.ndarray):
        fwd = self._run_dir(params, x, "fwd")
        bwd = self._run_dir(params, x[::-1], "bwd")
        y = np.concatenate([fwd[0][1:], bwd[0][1:][::-1]], axis=1)
        return y, (x, fwd, bwd)

    def _backward_dir(self, params: dict, x, run, dh_out, tag, grads):
        wf, uf, bf, wc, uc, bc = self._dir_names(tag)
        hs, fs, cs, gated = run
        t_len = x.shape[0]
        dx = np.zeros_like(x)
        dh_next = np.zeros(self.h)
        for t in range(t_len - 1, -1, -1):
            dh = dh_out[t] + dh_next
            f, c, h_prev, g = fs[t], cs[t], hs[t], gated[t]
            dc = dh * f
            df = dh * (c - h_prev)
            dh_prev = dh * (1.0 - f)
            dzc = dc * (1.0 - c * c)
            grads[wc] += np.outer(x[t], dzc)
            grads[bc] += dzc
            grads[uc] += np.outer(g, dzc)
            dg = dzc @ params[uc].T
            df += dg * h_prev
            dh_prev += dg * f
            dzf = df * f * (1.0 - f)
            grads[wf] += np.outer(x[t], dzf)
            grads[bf] += dzf
            grads[uf] += np.outer(h_prev, dzf)
            dh_prev += dzf @ params[uf].T
            dx[t] = dzc @ params[wc].T + dzf @ params[wf].T
            dh_next = dh_prev
        return dx

    def backward(self, params: dict, cache, dy: np.ndarray, grads: dict):
        x, fwd, bwd = cache
        dh_f = dy[:, : self.h]
        dh_b = dy[:, self.h :][::-1]
        dx = self._backward_dir(params, x, fwd, dh_f, "fwd", grads)
        dx += self._backward_dir(params, x[::-1], bwd, dh_b, "bwd", grads)[::-1]
        return dx


class SoftGatePair:
    """Scalar cross-branch couplers: a' = a + g_ab * b, b' = b + g_ba * a.

    Gates start at zero, so the branches are initially independent and a
    zero gate provably blocks gradient flow across that connection.
    """

    def __init__(self, name: str):
        self.name = name

    def init(self, params: dict, rng: np.random.Generator):
        params[f"{self.name}.ab"] = np.zeros(())
        params[f"{self.name}.ba"] = np.zeros(())

    def forward(self, params: dict, a: np.ndarray, b: np.ndarray):
        g_ab = params[f"{self.name}.ab"]
        g_ba = params[f"{self.name}.ba"]
        return a + g_ab * b, b + g_ba * a, (a, b)

    def backward(self, params: dict, cache, da2: np.ndarray, db2: np.ndarray, grads: dict):
        a, b = cache
        g_ab = params[f"{self.name}.ab"]
        g_ba = params[f"{self.name}.ba"]
        grads[f"{self.name}.ab"] += np.sum(da2 * b)
        grads[f"{self.name}.ba"] += np.sum(db2 * a)
        da = da2 + g_ba * db2
        db = db2 + g_ab * da2
        return da, db
