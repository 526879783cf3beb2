"""Companion figures for the experiment CSVs."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .experiments import KIND_BER, KIND_CONVERGE, KIND_ENERGY, KIND_RATE


def _by_group(rows, key_idx):
    groups = {}
    for row in rows:
        groups.setdefault(row[key_idx], []).append(row)
    return groups


def render_figure(kind, header, rows, out_path) -> None:
    if kind == KIND_RATE:
        fig = _rate_figure(rows)
    elif kind == KIND_CONVERGE:
        fig = _converge_figure(rows)
    elif kind == KIND_BER:
        fig = _ber_figure(rows)
    elif kind == KIND_ENERGY:
        fig = _energy_figure(rows)
    else:
        raise ValueError(f"unknown experiment kind {kind!r}")
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def _rate_figure(rows):
    fig, ax = plt.subplots(figsize=(6, 4))
    groups = _by_group(rows, 1)
    for name, grp in groups.items():
        snr = [g[0] for g in grp]
        mi = [g[2] for g in grp]
        err = [g[3] for g in grp]
        ax.errorbar(snr, mi, yerr=err, marker="o", capsize=2, label=name)
    first = next(iter(groups.values()))
    ax.plot([g[0] for g in first], [g[4] for g in first], "k--", label="capacity")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("mutual information (bits/channel use)")
    ax.legend()
    ax.grid(alpha=0.3)
    return fig


def _converge_figure(rows):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharex=True)
    for label, grp in _by_group(rows, 0).items():
        its = [g[1] for g in grp]
        axes[0].semilogy(its, [g[2] for g in grp], label=label)
        axes[1].semilogy(its, [g[3] for g in grp], label=label)
    axes[0].set_ylabel(r"mean $\Delta_u$")
    axes[1].set_ylabel(r"mean $\Delta_{u^2}$")
    for ax in axes:
        ax.set_xlabel("iteration")
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize=8)
    return fig


def _ber_figure(rows):
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, grp in _by_group(rows, 1).items():
        snr = np.array([g[0] for g in grp])
        ber = np.array([g[2] for g in grp])
        low = np.array([g[4] for g in grp])
        high = np.array([g[5] for g in grp])
        order = np.argsort(snr)
        ax.semilogy(snr[order], np.maximum(ber[order], 1e-7), marker="o", label=name)
        ax.fill_between(
            snr[order], np.maximum(low[order], 1e-7), np.maximum(high[order], 1e-7),
            alpha=0.2,
        )
    ax.set_xlabel(r"SNR$_c$ (dB)")
    ax.set_ylabel("coded BER")
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    return fig


def _energy_figure(rows):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for name, grp in _by_group(rows, 0).items():
        iters = sorted({g[2] for g in grp})
        logzec = [np.mean([g[3] for g in grp if g[2] == it]) for it in iters]
        gq = [np.mean([g[4] for g in grp if g[2] == it]) for it in iters]
        axes[0].plot(iters, logzec, label=name)
        axes[1].semilogy(iters, gq, label=f"{name} |grad q|")
        gs = [np.mean([g[5] for g in grp if g[2] == it]) for it in iters]
        axes[1].semilogy(iters, gs, linestyle="--", label=f"{name} |grad s|")
    axes[0].set_ylabel(r"mean $\log Z_{EC}$")
    axes[1].set_ylabel("mean gradient norm")
    for ax in axes:
        ax.set_xlabel("iteration")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    return fig
