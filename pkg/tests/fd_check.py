"""Central finite-difference gradient checking helpers (double precision)."""

import torch


def fd_param_grads(loss_fn, params, eps=1e-5):
    """Numerical gradient of loss_fn() w.r.t. each tensor in `params` by
    central differences, perturbing one element at a time."""
    grads = []
    for p in params:
        g = torch.zeros_like(p)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            hi = float(loss_fn().detach())
            flat[i] = orig - eps
            lo = float(loss_fn().detach())
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * eps)
        grads.append(g)
    return grads


def assert_grads_match(loss_fn, params, rtol=1e-4, eps=1e-5, min_denom=1e-8):
    """Compare autograd gradients of loss_fn() against central differences."""
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [p.grad.clone() if p.grad is not None else torch.zeros_like(p) for p in params]
    numeric = fd_param_grads(loss_fn, params, eps=eps)
    for a, n in zip(analytic, numeric):
        denom = torch.maximum(torch.maximum(a.abs(), n.abs()),
                              torch.full_like(a, min_denom))
        rel = ((a - n).abs() / denom).max().item()
        assert rel < rtol, f"gradient mismatch: max relative error {rel:.3e}"
