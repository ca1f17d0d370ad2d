"""The hybrid CNN-RNN yield network and the deep residual baseline network.

The CNN-RNN unrolls k+1 yearly steps. Each step feeds one year's weekly
weather through a 1D conv stack (W branch), the soil depth profile through a
second conv stack (S branch), and concatenates both branch outputs with the
surface-soil values, the average-yield channel and the planting-progress
vector as the LSTM input. Surface soil bypasses the conv branches. Every
step's hidden state maps through a shared linear head to a scalar
prediction; training uses the final step's prediction by default.

The exact per-layer convolution table of the original design is not
available, so the default stacks below are a documented choice honoring the
stated constraints (four conv layers per branch, ReLU, average pooling of
stride 2, branch FC widths 60/40 and 40). Channel counts are configurable.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from . import autodiff as ad
from .baselines import flatten_features
from .errors import ContractViolation
from .features import FeatureLayout, Standardizer
from .training import xavier_init

CROP_FC_W = {"corn": 60, "soybean": 40}


def _ladder(length, pools, what):
    """Sequence lengths after each conv(+pool) layer; conv preserves length."""
    lens = []
    cur = length
    for pool in pools:
        if pool:
            if cur < 2:
                raise ContractViolation(f"{what}: cannot pool a length-{cur} sequence")
            cur //= 2
        lens.append(cur)
    return lens


@dataclass(frozen=True)
class CnnRnnConfig:
    k: int = 5
    lstm_hidden: int = 64
    fc_w_out: int = 60
    fc_s_out: int = 40
    management_dim: int = 15
    weather_vars: int = 6
    weeks: int = 52
    soil_vars: int = 10
    soil_depths: int = 9
    surface_dim: int = 4
    kernel_width: int = 3
    wcnn_channels: tuple = (8, 12, 16, 20)
    wcnn_pool: tuple = (True, True, True, True)
    scnn_channels: tuple = (12, 16, 20, 24)
    scnn_pool: tuple = (True, True, False, False)

    @classmethod
    def for_crop(cls, crop, **overrides):
        overrides.setdefault("fc_w_out", CROP_FC_W[crop])
        return cls(**overrides)

    def validate(self):
        dims = (
            self.k, self.lstm_hidden, self.fc_w_out, self.fc_s_out,
            self.management_dim, self.weather_vars, self.weeks, self.soil_vars,
            self.soil_depths, self.surface_dim,
        )
        if min(dims) < 1:
            raise ContractViolation("all config dimensions must be positive")
        if self.kernel_width % 2 == 0 or self.kernel_width < 1:
            raise ContractViolation("kernel width must be odd and positive")
        if len(self.wcnn_channels) != len(self.wcnn_pool):
            raise ContractViolation("wcnn channel/pool specs differ in length")
        if len(self.scnn_channels) != len(self.scnn_pool):
            raise ContractViolation("scnn channel/pool specs differ in length")
        _ladder(self.weeks, self.wcnn_pool, "wcnn")
        _ladder(self.soil_depths, self.scnn_pool, "scnn")

    @property
    def lstm_input_dim(self):
        return self.fc_w_out + self.fc_s_out + self.surface_dim + 1 + self.management_dim

    @property
    def wcnn_flat(self):
        return self.wcnn_channels[-1] * _ladder(self.weeks, self.wcnn_pool, "wcnn")[-1]

    @property
    def scnn_flat(self):
        return self.scnn_channels[-1] * _ladder(self.soil_depths, self.scnn_pool, "scnn")[-1]

    @property
    def layout(self):
        return FeatureLayout(management_dim=self.management_dim)


# ---------------------------------------------------------------------------
# CNN-RNN


def build_cnn_rnn(config: CnnRnnConfig, seed) -> "CnnRnnModel":
    """Xavier-initialized model; biases start at zero. Deterministic per seed.

    Conv kernels (O, C, K) use fan_in = C*K and fan_out = O*K; matrices
    (m, n) use fan_in = n and fan_out = m.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    kw = config.kernel_width
    params = {}

    def conv_stack(prefix, cin, channels):
        for i, cout in enumerate(channels):
            params[f"{prefix}.conv{i}.w"] = xavier_init(
                cin * kw, cout * kw, rng, shape=(cout, cin, kw)
            )
            params[f"{prefix}.conv{i}.b"] = np.zeros(cout)
            cin = cout

    conv_stack("wcnn", config.weather_vars, config.wcnn_channels)
    params["wcnn.fc.w"] = xavier_init(
        config.wcnn_flat, config.fc_w_out, rng, shape=(config.fc_w_out, config.wcnn_flat)
    )
    params["wcnn.fc.b"] = np.zeros(config.fc_w_out)
    conv_stack("scnn", config.soil_vars, config.scnn_channels)
    params["scnn.fc.w"] = xavier_init(
        config.scnn_flat, config.fc_s_out, rng, shape=(config.fc_s_out, config.scnn_flat)
    )
    params["scnn.fc.b"] = np.zeros(config.fc_s_out)
    d, h = config.lstm_input_dim, config.lstm_hidden
    for gate in ("i", "f", "g", "o"):
        params[f"lstm.w_{gate}"] = xavier_init(d + h, h, rng, shape=(h, d + h))
        params[f"lstm.b_{gate}"] = np.zeros(h)
    params["head.w"] = xavier_init(h, 1, rng, shape=(1, h))
    params["head.b"] = np.zeros(1)
    return CnnRnnModel(config=config, params=params)


def _branch_apply(config, bound, prefix, x, pools, flat, fc_prefix):
    for i, pool in enumerate(pools):
        x = ad.relu(ad.conv1d(x, bound[f"{prefix}.conv{i}.w"], bound[f"{prefix}.conv{i}.b"]))
        if pool:
            x = ad.avgpool1d(x)
    x = ad.reshape(x, (-1, flat) if x.ndim == 3 else (flat,))
    return ad.relu(ad.affine(x, bound[f"{fc_prefix}.w"], bound[f"{fc_prefix}.b"]))


def wcnn_apply(config, bound, weather):
    return _branch_apply(
        config, bound, "wcnn", weather, config.wcnn_pool, config.wcnn_flat, "wcnn.fc"
    )


def scnn_apply(config, bound, soil):
    return _branch_apply(
        config, bound, "scnn", soil, config.scnn_pool, config.scnn_flat, "scnn.fc"
    )


def cnn_rnn_apply(config, bound, tape, steps):
    """Unrolled forward over per-step (batched) input arrays.

    ``steps`` is a list of dicts with keys weather/soil/surface/avg/mgmt.
    Returns per-step prediction tensors, LSTM outputs, and the input leaves
    (for attribution).
    """
    batch = steps[0]["weather"].shape[0]
    h = tape.leaf(np.zeros((batch, config.lstm_hidden)))
    c = tape.leaf(np.zeros((batch, config.lstm_hidden)))
    lstm = ad.LstmParams(
        bound["lstm.w_i"], bound["lstm.b_i"], bound["lstm.w_f"], bound["lstm.b_f"],
        bound["lstm.w_g"], bound["lstm.b_g"], bound["lstm.w_o"], bound["lstm.b_o"],
    )
    preds, hs, leaves = [], [], []
    for arrs in steps:
        leaf = {
            key: val if isinstance(val, ad.Tensor)
            else tape.leaf(np.ascontiguousarray(val))
            for key, val in arrs.items()
        }
        wf = wcnn_apply(config, bound, leaf["weather"])
        sf = scnn_apply(config, bound, leaf["soil"])
        xin = ad.concat([wf, sf, leaf["surface"], leaf["avg"], leaf["mgmt"]], axis=-1)
        h, c = ad.lstm_cell_step(xin, h, c, lstm)
        preds.append(ad.affine(h, bound["head.w"], bound["head.b"]))
        hs.append(h)
        leaves.append(leaf)
    return SimpleNamespace(preds=preds, h_steps=hs, input_leaves=leaves)


class PreparedSequences:
    """Standardized per-step arrays for a fixed sample list.

    Targets are materialized lazily through the audited sample property, so
    preparing guarded (validation) samples for prediction never reads their
    ground truth.
    """

    def __init__(self, model, samples):
        cfg = model.config
        st = model.standardizer or Standardizer.identity(
            cfg.management_dim, cfg.weather_vars, cfg.weeks, cfg.soil_vars,
            cfg.soil_depths, cfg.surface_dim,
        )
        self._model = model
        self._st = st
        self._samples = list(samples)
        self._targets_model = None
        n = len(self._samples)
        k1 = cfg.k + 1
        self.n = n
        self.weather = np.empty((n, k1, cfg.weather_vars, cfg.weeks))
        self.soil = np.empty((n, k1, cfg.soil_vars, cfg.soil_depths))
        self.surface = np.empty((n, k1, cfg.surface_dim))
        self.mgmt = np.empty((n, k1, cfg.management_dim))
        self.avg = np.empty((n, k1, 1))
        for i, s in enumerate(self._samples):
            if len(s.records) != k1:
                raise ContractViolation(
                    f"sample window has {len(s.records)} records, expected {k1}"
                )
            for j, rec in enumerate(s.records):
                self.weather[i, j] = (rec.weather - st.weather_mean) / st.weather_sd
                self.soil[i, j] = (rec.soil_profile - st.soil_mean) / st.soil_sd
                self.surface[i, j] = (rec.soil_surface - st.surface_mean) / st.surface_sd
                self.mgmt[i, j] = (rec.management - st.management_mean) / st.management_sd
                self.avg[i, j, 0] = (s.avg_yield_inputs[j] - st.avg_yield_mean) / st.avg_yield_sd

    @property
    def targets_model(self):
        if self._targets_model is None:
            self._targets_model = np.array(
                [self._st.target_to_model(s.target) for s in self._samples]
            )
        return self._targets_model

    def steps_for(self, idx):
        k1 = self.weather.shape[1]
        return [
            {
                "weather": self.weather[idx, j],
                "soil": self.soil[idx, j],
                "surface": self.surface[idx, j],
                "avg": self.avg[idx, j],
                "mgmt": self.mgmt[idx, j],
            }
            for j in range(k1)
        ]

    def loss(self, tape, bound, idx, training=False, all_steps=False):
        from .training import mse_loss

        res = cnn_rnn_apply(self._model.config, bound, tape, self.steps_for(idx))
        if not all_steps:
            pred = ad.reshape(res.preds[-1], (len(idx),))
            return mse_loss(pred, self.targets_model[idx])
        # all-step loss over the window years with an observed yield
        k1 = self.weather.shape[1]
        t_fill = np.zeros((len(idx), k1))
        mask = np.zeros((len(idx), k1))
        for row, i in enumerate(np.asarray(idx)):
            s = self._samples[int(i)]
            for j, rec in enumerate(s.records):
                if rec.has_yield:
                    t_fill[row, j] = self._st.target_to_model(rec.yield_bu_acre)
                    mask[row, j] = 1.0
        pred = ad.concat(res.preds, axis=-1)
        d = ad.sub(pred, ad.constant(t_fill))
        masked = ad.mul(ad.mul(d, d), ad.constant(mask))
        scale = masked.data.size / max(mask.sum(), 1.0)
        return ad.mul(ad.mean(masked), ad.constant(np.asarray(scale)))

    def predict_model_space(self, model, chunk=512):
        out = np.empty(self.n)
        for start in range(0, self.n, chunk):
            idx = np.arange(start, min(start + chunk, self.n))
            tape = ad.Tape()
            bound = {name: tape.leaf(arr) for name, arr in model.params.items()}
            res = cnn_rnn_apply(model.config, bound, tape, self.steps_for(idx))
            out[idx] = res.preds[-1].data[:, 0]
        return out

    def predict(self, model):
        return self._st.model_to_target(self.predict_model_space(model))


@dataclass
class CnnRnnModel:
    """Architecture config plus all learnable parameters.

    ``input_mask``/``mask_fill`` describe an optional flat feature mask
    (see :mod:`yieldnet.attribution`) that prediction helpers apply before
    standardization. Immutable during inference; training mutates ``params``
    in a single context.
    """

    config: CnnRnnConfig
    params: dict
    standardizer: Standardizer | None = None
    input_mask: np.ndarray | None = None
    mask_fill: np.ndarray | None = None

    kind = "cnn-rnn"

    def fit_standardizer(self, samples, standardize_targets=False):
        self.standardizer = Standardizer.fit(samples, standardize_targets)

    def prepare(self, samples):
        return PreparedSequences(self, samples)

    def predict(self, samples):
        """Final-step predictions (bu/acre) for a list of samples."""
        return self.prepare(samples).predict(self)

    def param_count(self):
        return sum(v.size for v in self.params.values())


def cnn_rnn_forward(model: CnnRnnModel, sample):
    """All k+1 per-step predictions (bu/acre) for one sample."""
    prep = model.prepare([sample])
    tape = ad.Tape()
    bound = {name: tape.leaf(arr) for name, arr in model.params.items()}
    res = cnn_rnn_apply(model.config, bound, tape, prep.steps_for(np.array([0])))
    st = prep._st
    return np.array([float(st.model_to_target(p.data[0, 0])) for p in res.preds])


def wcnn_forward(model: CnnRnnModel, weather):
    """Raw W-branch output for one (weather_vars, weeks) array."""
    tape = ad.Tape()
    bound = {name: tape.leaf(arr) for name, arr in model.params.items()}
    return wcnn_apply(model.config, bound, tape.leaf(np.asarray(weather, dtype=np.float64))).data


def scnn_forward(model: CnnRnnModel, soil):
    """Raw S-branch output for one (soil_vars, depths) array."""
    tape = ad.Tape()
    bound = {name: tape.leaf(arr) for name, arr in model.params.items()}
    return scnn_apply(model.config, bound, tape.leaf(np.asarray(soil, dtype=np.float64))).data


# ---------------------------------------------------------------------------
# deep residual fully connected baseline


@dataclass(frozen=True)
class DfnnConfig:
    input_dim: int
    width: int = 50
    depth: int = 9
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def validate(self):
        if self.input_dim < 1 or self.width < 1:
            raise ContractViolation("dfnn dimensions must be positive")
        if self.depth != 9:
            raise ContractViolation("dfnn uses the fixed 9-hidden-layer design")


def build_dfnn(config: DfnnConfig, seed) -> "DfnnModel":
    config.validate()
    rng = np.random.default_rng(seed)
    params = {}
    buffers = {}
    cin = config.input_dim
    for i in range(config.depth):
        params[f"l{i}.w"] = xavier_init(cin, config.width, rng, shape=(config.width, cin))
        params[f"l{i}.b"] = np.zeros(config.width)
        params[f"l{i}.gamma"] = np.ones(config.width)
        params[f"l{i}.beta"] = np.zeros(config.width)
        buffers[f"l{i}.mean"] = np.zeros(config.width)
        buffers[f"l{i}.var"] = np.ones(config.width)
        cin = config.width
    params["head.w"] = xavier_init(config.width, 1, rng, shape=(1, config.width))
    params["head.b"] = np.zeros(1)
    return DfnnModel(config=config, params=params, buffers=buffers)


def dfnn_apply(config, bound, buffers, x, training):
    """Nine hidden layers with batch norm and ReLU; identity skips join
    hidden layers (2,3), (4,5), (6,7) and (8,9) before the pair's final
    activation; linear scalar head."""

    def layer(i, t):
        t = ad.affine(t, bound[f"l{i}.w"], bound[f"l{i}.b"])
        return ad.batch_norm(
            t, bound[f"l{i}.gamma"], bound[f"l{i}.beta"],
            buffers[f"l{i}.mean"], buffers[f"l{i}.var"],
            training, momentum=config.bn_momentum, eps=config.bn_eps,
        )

    t = ad.relu(layer(0, x))
    for a in (1, 3, 5, 7):
        inner = ad.relu(layer(a, t))
        t = ad.relu(ad.add(layer(a + 1, inner), t))
    return ad.affine(t, bound["head.w"], bound["head.b"])


class PreparedFlat:
    """Standardized flat feature matrix for the DFNN."""

    def __init__(self, model, samples):
        self._model = model
        self._samples = list(samples)
        st = model.standardizer
        if st is None:
            raise ContractViolation("dfnn preparation requires a fitted standardizer")
        self._st = st
        X = np.stack([flatten_features(s) for s in self._samples])
        self.X = (X - st.flat_mean) / st.flat_sd
        self.n = len(self._samples)
        self._targets_model = None

    @property
    def targets_model(self):
        if self._targets_model is None:
            self._targets_model = np.array(
                [self._st.target_to_model(s.target) for s in self._samples]
            )
        return self._targets_model

    def loss(self, tape, bound, idx, training=True, all_steps=False):
        from .training import mse_loss

        x = tape.leaf(self.X[idx])
        pred = dfnn_apply(self._model.config, bound, self._model.buffers, x, training)
        return mse_loss(ad.reshape(pred, (len(idx),)), self.targets_model[idx])

    def predict_model_space(self, model, chunk=1024):
        out = np.empty(self.n)
        for start in range(0, self.n, chunk):
            idx = np.arange(start, min(start + chunk, self.n))
            tape = ad.Tape()
            bound = {name: tape.leaf(arr) for name, arr in model.params.items()}
            pred = dfnn_apply(model.config, bound, model.buffers, tape.leaf(self.X[idx]), False)
            out[idx] = pred.data[:, 0]
        return out

    def predict(self, model):
        return self._st.model_to_target(self.predict_model_space(model))


@dataclass
class DfnnModel:
    config: DfnnConfig
    params: dict
    buffers: dict
    standardizer: Standardizer | None = None

    kind = "dfnn"

    def fit_standardizer(self, samples, standardize_targets=False):
        self.standardizer = Standardizer.fit(samples, standardize_targets)

    def prepare(self, samples):
        return PreparedFlat(self, samples)

    def predict(self, samples):
        return self.prepare(samples).predict(self)

    def param_count(self):
        return sum(v.size for v in self.params.values())


def dfnn_forward(model: DfnnModel, features, training=False):
    """Scalar prediction in model space for one flat feature vector."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.config.input_dim:
        raise ContractViolation(
            f"feature dim {x.shape} does not match model input {model.config.input_dim}"
        )
    tape = ad.Tape()
    bound = {name: tape.leaf(arr) for name, arr in model.params.items()}
    pred = dfnn_apply(model.config, bound, model.buffers, tape.leaf(x[None, :]), training)
    return float(pred.data[0, 0])
