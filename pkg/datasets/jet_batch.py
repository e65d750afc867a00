from typing import List, Optional

import h5py
import numpy as np
import pandas as pd

from born_infeld.geometry import Jet2, random_jets


def _array_repr(val):
    if isinstance(val, np.ndarray):
        return f"ndarray(shape={tuple(val.shape)}, dtype={val.dtype})"
    return repr(val)


class JetBatch:
    """ A batch of pointwise jets of u (gradient, Hessian and optionally
    third derivatives), stored flat so it can go to CSV or HDF5 and come
    back as a single vectorized Jet2. Column names in CSV are
    g{i}, h{i}{j} and t{i}{j}{k} (i <= j <= k, symmetric entries are
    rebuilt on load). """

    def __init__(self, grad, hess, third=None, rho=None):
        self.grad = np.asarray(grad, dtype=float)
        self.hess = np.asarray(hess, dtype=float)
        self.third = None if third is None else np.asarray(third, dtype=float)
        self.rho = None if rho is None else np.asarray(rho, dtype=float)

    @property
    def N(self):
        return self.grad.shape[-1]

    def __len__(self):
        return self.grad.shape[0]

    @staticmethod
    def random(n, N, rng: np.random.Generator, max_grad=0.99, third=False, hess_scale=1.0):
        jet = random_jets(n, N, rng, max_grad=max_grad, third=third, hess_scale=hess_scale)
        return JetBatch(jet.grad, jet.hess, jet.third)

    @staticmethod
    def collate(items: List["JetBatch"]):
        """ Concatenate batches along the jet axis """
        keys = ["grad", "hess", "third", "rho"]
        cols = {}
        for key in keys:
            vals = [getattr(item, key) for item in items]
            cols[key] = None if any(v is None for v in vals) else np.concatenate(vals, 0)
        return JetBatch(**cols)

    def jet(self) -> Jet2:
        return Jet2(grad=self.grad, hess=self.hess, rho=self.rho, third=self.third)

    def chunks(self, size):
        for start in range(0, len(self), size):
            sl = slice(start, start + size)
            yield JetBatch(self.grad[sl], self.hess[sl],
                           None if self.third is None else self.third[sl],
                           None if self.rho is None else self.rho[sl])

    def asdict(self):
        """ Convert to dict """
        return {key: val for key, val in self.__dict__.items() if val is not None}

    def __repr__(self):
        indent = "   "
        ret = "JetBatch(\n"
        for key, val in self.asdict().items():
            ret += indent + f"{key}={_array_repr(val)}\n"
        ret += ")"
        return ret

    def to_frame(self):
        N = self.N
        cols = {f"g{i}": self.grad[:, i] for i in range(N)}
        for i in range(N):
            for j in range(i, N):
                cols[f"h{i}{j}"] = self.hess[:, i, j]
        if self.third is not None:
            for i in range(N):
                for j in range(i, N):
                    for k in range(j, N):
                        cols[f"t{i}{j}{k}"] = self.third[:, i, j, k]
        if self.rho is not None:
            cols["rho"] = self.rho
        return pd.DataFrame(cols)

    @staticmethod
    def from_frame(df: pd.DataFrame):
        N = sum(1 for c in df.columns if c.startswith("g"))
        n = len(df)
        grad = np.stack([df[f"g{i}"].to_numpy(float) for i in range(N)], axis=-1)
        hess = np.zeros((n, N, N))
        for i in range(N):
            for j in range(i, N):
                hess[:, i, j] = hess[:, j, i] = df[f"h{i}{j}"].to_numpy(float)
        third = None
        if f"t{0}{0}{0}" in df.columns:
            third = np.zeros((n, N, N, N))
            for i in range(N):
                for j in range(i, N):
                    for k in range(j, N):
                        val = df[f"t{i}{j}{k}"].to_numpy(float)
                        for a, b, c in {(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)}:
                            third[:, a, b, c] = val
        rho = df["rho"].to_numpy(float) if "rho" in df.columns else None
        return JetBatch(grad, hess, third, rho)

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @staticmethod
    def from_csv(path):
        return JetBatch.from_frame(pd.read_csv(path))

    def to_h5(self, path):
        with h5py.File(path, "w") as f:
            for key, val in self.asdict().items():
                f.create_dataset(key, data=val)

    @staticmethod
    def from_h5(path):
        with h5py.File(path, "r") as f:
            kwargs = {key: f[key][()] for key in ("grad", "hess", "third", "rho") if key in f}
        return JetBatch(**kwargs)


def load_jets(path: Optional[str]):
    """ CSV or HDF5 by extension; None gives None """
    if path is None:
        return None
    if str(path).endswith((".h5", ".hdf5")):
        return JetBatch.from_h5(path)
    return JetBatch.from_csv(path)
