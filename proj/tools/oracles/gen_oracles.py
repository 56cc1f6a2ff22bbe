"""Freezes reference values for the C++ tests into tests/fixtures/oracles.json.

Forward values come from plain numpy loops; gradients come from torch autograd
on float64 tensors. Nothing here imports the C++ library.

    python3 tools/oracles/gen_oracles.py
"""

import json
import math
import pathlib

import numpy as np
import torch

torch.set_default_dtype(torch.float64)
rng = np.random.default_rng(20240611)
OUT = pathlib.Path(__file__).resolve().parents[2] / "tests" / "fixtures" / "oracles.json"


def mat(a):
    return np.asarray(a, dtype=float).tolist()


def tensor4(a):
    a = np.asarray(a, dtype=float)
    return {"dims": list(a.shape), "data": a.ravel().tolist()}


def normal(*shape):
    return rng.standard_normal(shape)


def t(a):
    return torch.tensor(np.asarray(a, dtype=float), requires_grad=True)


def grad_of(x):
    return x.grad.detach().numpy()


def tensor_ops():
    a, b = normal(3, 4), normal(4, 2)
    prod = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                prod[i, j] += a[i, k] * b[k, j]
    p, q = normal(4, 3), normal(4, 3)
    h1, h2 = normal(3, 5), normal(3, 5)
    return {
        "matmul": {"a": mat(a), "b": mat(b), "out": mat(prod)},
        "trace_inner": {"a": mat(p), "b": mat(q), "out": float(np.trace(q.T @ p))},
        "hadamard": {"a": mat(h1), "b": mat(h2), "out": mat([[h1[i, j] * h2[i, j] for j in range(5)] for i in range(3)])},
    }


def optim_ops():
    x = 1.0
    for _ in range(50):
        x -= 0.1 * 2 * x
    # RMSProp, constant gradient 1.
    e, xr = 0.0, 0.0
    for _ in range(100):
        e = 0.9 * e + 0.1 * 1.0
        xr -= 0.01 * 1.0 / math.sqrt(e + 1e-8)
    # Adam on x^2 from 5.
    m = v = 0.0
    xa = 5.0
    for step in range(1, 501):
        g = 2 * xa
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mh, vh = m / (1 - 0.9**step), v / (1 - 0.999**step)
        xa -= 0.1 * mh / (math.sqrt(vh) + 1e-8)
    # Momentum velocity under a constant gradient.
    vel = 0.0
    for _ in range(200):
        vel = 0.9 * vel + 0.01 * 3.0
    return {
        "gd_x2_50": x,
        "rmsprop_const_100": {"x": xr, "e": e},
        "adam_x2_500": xa,
        "momentum_velocity_200": {"alpha": 0.01, "gamma": 0.9, "g": 3.0, "v": vel, "limit": 0.01 * 3.0 / 0.1},
    }


def scaler_ops():
    x = rng.uniform(-3, 5, size=(20, 3))
    mean = [sum(x[:, j]) / 20 for j in range(3)]
    std = [math.sqrt(sum((x[i, j] - mean[j]) ** 2 for i in range(20)) / 20) for j in range(3)]
    return {"x": mat(x), "min": [min(x[:, j]) for j in range(3)], "max": [max(x[:, j]) for j in range(3)],
            "mean": mean, "std": std}


def logistic_ops():
    yhat = rng.uniform(0.05, 0.95, size=7)
    y = rng.integers(0, 2, size=7)
    loss = -sum(y[i] * math.log(yhat[i]) + (1 - y[i]) * math.log(1 - yhat[i]) for i in range(7)) / 7
    x = normal(9, 4)
    w, b = normal(4), float(normal(1)[0])
    yy = rng.integers(0, 2, size=9)
    tw, tb = t(w), t([b])
    p = torch.sigmoid(torch.tensor(x) @ tw + tb)
    ty = torch.tensor(yy, dtype=torch.float64)
    l = -(ty * torch.log(p) + (1 - ty) * torch.log(1 - p)).mean()
    l.backward()
    return {
        "sigmoid_1": 1.0 / (1.0 + math.exp(-1.0)),
        "loss": {"yhat": yhat.tolist(), "y": y.tolist(), "out": loss},
        "gradient": {"x": mat(x), "w": w.tolist(), "b": b, "y": yy.tolist(), "loss": l.item(),
                     "grad_w": grad_of(tw).tolist(), "grad_b": float(grad_of(tb)[0])},
    }


def softmax_np(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def mlp_ops():
    # 2-3-2 network with small integer weights.
    x = np.array([[1.0, -1.0], [0.0, 2.0]])
    w1 = np.array([[1.0, -1.0, 2.0], [0.0, 1.0, -1.0]])
    b1 = np.array([0.0, 1.0, -1.0])
    w2 = np.array([[1.0, 0.0], [-1.0, 1.0], [2.0, -2.0]])
    b2 = np.array([0.5, -0.5])
    h1 = np.maximum(x @ w1 + b1, 0.0)
    yhat = softmax_np(h1 @ w2 + b2)

    # Random 4-5-3 network, batch 6, cross-entropy gradients.
    sizes = [4, 5, 3]
    xs = normal(6, 4)
    ws = [normal(sizes[i], sizes[i + 1]) / math.sqrt(sizes[i]) for i in range(2)]
    bs = [normal(sizes[i + 1]) * 0.1 for i in range(2)]
    labels = rng.integers(0, 3, size=6)
    tws, tbs = [t(w) for w in ws], [t(b) for b in bs]
    hcur = torch.tensor(xs)
    for i in range(2):
        zc = hcur @ tws[i] + tbs[i]
        hcur = torch.relu(zc) if i == 0 else torch.softmax(zc, dim=1)
    onehot = torch.nn.functional.one_hot(torch.tensor(labels), 3).double()
    ce = -(onehot * torch.log(hcur)).sum() / 6
    ce.backward()

    # Softmax Jacobian at random logits.
    logits = normal(5)
    jac = torch.autograd.functional.jacobian(lambda v: torch.softmax(v, dim=0), torch.tensor(logits))

    # Cross-entropy direct double sum.
    probs = softmax_np(normal(4, 3))
    lab = rng.integers(0, 3, size=4)
    ce_sum = 0.0
    for i in range(4):
        for j in range(3):
            ce_sum -= (1.0 if lab[i] == j else 0.0) * math.log(probs[i, j])
    return {
        "hand_232": {"x": mat(x), "w1": mat(w1), "b1": b1.tolist(), "w2": mat(w2), "b2": b2.tolist(),
                     "yhat": mat(yhat)},
        "backward_453": {"x": mat(xs), "w": [mat(w) for w in ws], "b": [b.tolist() for b in bs],
                         "labels": labels.tolist(), "loss": ce.item(),
                         "grad_w": [mat(grad_of(w)) for w in tws], "grad_b": [grad_of(b).tolist() for b in tbs]},
        "softmax_jacobian": {"logits": logits.tolist(), "jacobian": mat(jac.numpy())},
        "cross_entropy": {"probs": mat(probs), "labels": lab.tolist(), "out": ce_sum / 4},
    }


def conv_ops():
    import torch.nn.functional as F

    inp = normal(2, 2, 5, 6)
    ker = normal(3, 2, 3, 3)
    g = normal(2, 3, 3, 3)
    ti, tk = t(inp), t(ker)
    out = F.conv2d(ti, tk, stride=2, padding=1)
    (out * torch.tensor(g)).sum().backward()

    pin = normal(2, 3, 6, 5)
    pg_max = normal(2, 3, 2, 2)
    tp = t(pin)
    mo = F.max_pool2d(tp, kernel_size=3, stride=2)
    (mo * torch.tensor(pg_max)).sum().backward()
    pg_avg = normal(2, 3, 3, 2)
    ta = t(pin)
    ao = F.avg_pool2d(ta, kernel_size=2, stride=2)
    (ao * torch.tensor(pg_avg)).sum().backward()

    bx = normal(4, 2, 3, 3) * 2 + 1
    gamma, beta = normal(2), normal(2)
    bg = normal(4, 2, 3, 3)
    tx, tg, tb = t(bx), t(gamma), t(beta)
    mu = tx.mean(dim=(0, 2, 3), keepdim=True)
    var = ((tx - mu) ** 2).mean(dim=(0, 2, 3), keepdim=True)
    y = (tx - mu) / torch.sqrt(var + 1e-5) * tg.view(1, 2, 1, 1) + tb.view(1, 2, 1, 1)
    (y * torch.tensor(bg)).sum().backward()
    batch_mean = bx.mean(axis=(0, 2, 3))
    batch_var = bx.var(axis=(0, 2, 3))
    return {
        "conv": {"input": tensor4(inp), "kernel": tensor4(ker), "stride": 2, "pad": 1, "output": tensor4(out.detach()),
                 "grad_out": tensor4(g), "grad_input": tensor4(grad_of(ti)), "grad_kernel": tensor4(grad_of(tk))},
        "maxpool": {"input": tensor4(pin), "size": 3, "stride": 2, "output": tensor4(mo.detach()),
                    "grad_out": tensor4(pg_max), "grad_input": tensor4(grad_of(tp))},
        "avgpool": {"input": tensor4(pin), "size": 2, "stride": 2, "output": tensor4(ao.detach()),
                    "grad_out": tensor4(pg_avg), "grad_input": tensor4(grad_of(ta))},
        "batchnorm": {"input": tensor4(bx), "gamma": gamma.tolist(), "beta": beta.tolist(),
                      "output": tensor4(y.detach()), "grad_out": tensor4(bg), "grad_input": tensor4(grad_of(tx)),
                      "grad_gamma": grad_of(tg).tolist(), "grad_beta": grad_of(tb).tolist(),
                      "running_mean": (0.1 * batch_mean).tolist(), "running_var": (0.9 + 0.1 * batch_var).tolist()},
    }


def recurrent_ops():
    # Scalar simple RNN unrolled by hand, T = 3.
    wxh, whh, why, bh, by = 0.5, -0.8, 1.5, 0.1, -0.2
    xs = [1.0, -2.0, 0.5]
    h, hs, ys = 0.0, [], []
    for x in xs:
        h = math.tanh(wxh * x + whh * h + bh)
        hs.append(h)
        ys.append(why * h + by)

    d, hid, o, steps = 3, 4, 2, 4
    seq = normal(steps, d)
    tgt = normal(steps, o)

    def gate():
        return [normal(hid, d) * 0.6, normal(hid, hid) * 0.6, normal(hid) * 0.3]

    def export(params):
        return {"w": mat(params[0]), "u": mat(params[1]), "b": params[2].tolist()}

    head_w, head_b = normal(o, hid) * 0.5, normal(o) * 0.1

    lstm = {name: gate() for name in ("forget", "input", "candidate", "output")}
    tl = {name: [t(p) for p in ps] for name, ps in lstm.items()}
    thw, thb = t(head_w), t(head_b)
    hcur, ccur = torch.zeros(hid), torch.zeros(hid)
    loss = 0
    lstm_h, lstm_c = [], []
    for step in range(steps):
        x = torch.tensor(seq[step])
        pre = {n: p[0] @ x + p[1] @ hcur + p[2] for n, p in tl.items()}
        f, i, g, og = (torch.sigmoid(pre["forget"]), torch.sigmoid(pre["input"]), torch.tanh(pre["candidate"]),
                       torch.sigmoid(pre["output"]))
        ccur = f * ccur + i * g
        hcur = og * torch.tanh(ccur)
        lstm_h.append(hcur.detach().numpy().tolist())
        lstm_c.append(ccur.detach().numpy().tolist())
        yv = thw @ hcur + thb
        loss = loss + ((yv - torch.tensor(tgt[step])) ** 2).mean()
    loss.backward()
    lstm_out = {"cell": {n: export(p) for n, p in lstm.items()}, "head_w": mat(head_w), "head_b": head_b.tolist(),
                "h": lstm_h, "c": lstm_c, "loss": loss.item(),
                "grad": {n: {"w": mat(grad_of(p[0])), "u": mat(grad_of(p[1])), "b": grad_of(p[2]).tolist()}
                         for n, p in tl.items()},
                "grad_head_w": mat(grad_of(thw)), "grad_head_b": grad_of(thb).tolist()}

    gru = {name: gate() for name in ("update", "reset", "candidate")}
    tg = {name: [t(p) for p in ps] for name, ps in gru.items()}
    thw, thb = t(head_w), t(head_b)
    hcur = torch.zeros(hid)
    loss = 0
    gru_h = []
    for step in range(steps):
        x = torch.tensor(seq[step])
        z = torch.sigmoid(tg["update"][0] @ x + tg["update"][1] @ hcur + tg["update"][2])
        r = torch.sigmoid(tg["reset"][0] @ x + tg["reset"][1] @ hcur + tg["reset"][2])
        n = torch.tanh(tg["candidate"][0] @ x + tg["candidate"][1] @ (r * hcur) + tg["candidate"][2])
        hcur = (1 - z) * hcur + z * n
        gru_h.append(hcur.detach().numpy().tolist())
        yv = thw @ hcur + thb
        loss = loss + ((yv - torch.tensor(tgt[step])) ** 2).mean()
    loss.backward()
    gru_out = {"cell": {n: export(p) for n, p in gru.items()}, "head_w": mat(head_w), "head_b": head_b.tolist(),
               "h": gru_h, "loss": loss.item(),
               "grad": {n: {"w": mat(grad_of(p[0])), "u": mat(grad_of(p[1])), "b": grad_of(p[2]).tolist()}
                        for n, p in tg.items()},
               "grad_head_w": mat(grad_of(thw)), "grad_head_b": grad_of(thb).tolist()}

    # Simple RNN with vector state, sequence MSE loss.
    w_xh, w_hh, w_hy = normal(hid, d) * 0.6, normal(hid, hid) * 0.5, normal(o, hid) * 0.5
    b_h, b_y = normal(hid) * 0.2, normal(o) * 0.2
    params = [t(p) for p in (w_xh, w_hh, w_hy, b_h, b_y)]
    hcur = torch.zeros(hid)
    loss = 0
    for step in range(steps):
        hcur = torch.tanh(params[0] @ torch.tensor(seq[step]) + params[1] @ hcur + params[3])
        loss = loss + ((params[2] @ hcur + params[4] - torch.tensor(tgt[step])) ** 2).mean()
    loss.backward()
    rnn_out = {"w_xh": mat(w_xh), "w_hh": mat(w_hh), "w_hy": mat(w_hy), "b_h": b_h.tolist(), "b_y": b_y.tolist(),
               "loss": loss.item(), "grad": [np.asarray(grad_of(p)).tolist() for p in params]}

    return {"scalar_rnn": {"w_xh": wxh, "w_hh": whh, "w_hy": why, "b_h": bh, "b_y": by, "x": xs, "h": hs, "y": ys},
            "inputs": mat(seq), "targets": mat(tgt), "lstm": lstm_out, "gru": gru_out, "rnn": rnn_out}


def attention_ops():
    n, d, dk, dv, dff = 3, 4, 2, 2, 5
    x = normal(n, d)
    wq, wk, wv = normal(d, dk), normal(d, dk), normal(d, dv)
    q, k, v = x @ wq, x @ wk, x @ wv
    scores = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            scores[i, j] = sum(q[i, c] * k[j, c] for c in range(dk)) / math.sqrt(dk)
    a = softmax_np(scores)
    z = a @ v

    w1, b1, w2, b2 = normal(dv, dff), normal(dff), normal(dff, d), normal(d)
    gain, offset = 1 + 0.3 * normal(d), 0.3 * normal(d)
    gout = normal(n, d)
    tx = t(x)
    tp = [t(p) for p in (wq, wk, wv, w1, b1, w2, b2, gain, offset)]
    tq, tk_, tv = tx @ tp[0], tx @ tp[1], tx @ tp[2]
    ta = torch.softmax(tq @ tk_.T / math.sqrt(dk), dim=1)
    tz = ta @ tv
    res = tx + torch.relu(tz @ tp[3] + tp[4]) @ tp[5] + tp[6]
    mu = res.mean(dim=1, keepdim=True)
    var = ((res - mu) ** 2).mean(dim=1, keepdim=True)
    out = (res - mu) / torch.sqrt(var + 1e-5) * tp[7] + tp[8]
    (out * torch.tensor(gout)).sum().backward()
    names = ["w_q", "w_k", "w_v", "w1", "b1", "w2", "b2", "gain", "offset"]
    return {
        "scores": {"x": mat(x), "w_q": mat(wq), "w_k": mat(wk), "w_v": mat(wv), "a": mat(a), "z": mat(z)},
        "transformer": {"x": mat(x), "params": {nm: np.asarray(p.detach()).tolist() for nm, p in zip(names, tp)},
                        "output": mat(out.detach()), "grad_out": mat(gout), "grad_x": mat(grad_of(tx)),
                        "grad": {nm: np.asarray(grad_of(p)).tolist() for nm, p in zip(names, tp)}},
    }


def main():
    fixtures = {
        "tensor": tensor_ops(),
        "optim": optim_ops(),
        "scalers": scaler_ops(),
        "logistic": logistic_ops(),
        "mlp": mlp_ops(),
        "conv": conv_ops(),
        "recurrent": recurrent_ops(),
        "attention": attention_ops(),
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(fixtures, indent=1) + "\n")


if __name__ == "__main__":
    main()
