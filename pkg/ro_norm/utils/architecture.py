# Authors: Theo Gnassounou <theo.gnassounou@inria.fr>
#          Omar Chehab <l-emir-omar.chehab@inria.fr>
#
# License: BSD (3-clause)

import torch
from torch import nn

from ro_norm.utils._dataset import MappingKind
from ro_norm.utils._errors import ConfigError, NumericsError, ShapeError
from ro_norm.utils._metrics import relative_l2_loss
from ro_norm.utils._reduction import decode_array, encode_array
from ro_norm.utils._spectral import EigenBasis

ACTIVATIONS = {
    "gelu": nn.GELU,
    "relu": nn.ReLU,
    "identity": nn.Identity,
}


def _activation(name):
    if name not in ACTIVATIONS:
        raise ConfigError(f"Unknown activation: {name}")
    return ACTIVATIONS[name]()


def _basis_tensors(basis, like):
    """``(phi, weighted phi)`` of an EigenBasis or a tensor pair, cast like ``like``."""
    phi, phi_w = basis.tensors if hasattr(basis, "tensors") else basis
    return (
        phi.to(dtype=like.dtype, device=like.device),
        phi_w.to(dtype=like.dtype, device=like.device),
    )


def spectral_conv(v, K, basis):
    """Kernel integral operator acting on the leading basis modes.

    Parameters
    ----------
    v : tensor, shape=(..., n_points, d_w)
        Nodal field.
    K : tensor, shape=(d_M, d_w, d_w)
        One channel-mixing matrix per mode, ``K[m] @ beta_m``.
    basis : EigenBasis | tuple of tensors
        Basis with exactly ``d_M`` columns on the points of ``v``.

    Returns
    -------
    out : tensor, shape=(..., n_points, d_w)
    """
    phi, phi_w = _basis_tensors(basis, v)
    if phi.shape[1] != K.shape[0]:
        raise ShapeError(f"{K.shape[0]} kernel modes for a {phi.shape[1]}-mode basis")
    if phi.shape[0] != v.shape[-2]:
        raise ShapeError(
            f"field on {v.shape[-2]} points, basis on {phi.shape[0]} points"
        )
    beta = torch.einsum("pm,...pc->...mc", phi_w, v)
    beta = torch.einsum("moc,...mc->...mo", K, beta)
    return torch.einsum("pm,...mo->...po", phi, beta)


class SpectralConv(nn.Module):
    def __init__(self, width, n_modes):
        super().__init__()
        self.width = width
        self.n_modes = n_modes
        self.kernel = nn.Parameter(torch.empty(n_modes, width, width))

    def forward(self, v, basis):
        return spectral_conv(v, self.kernel, basis)


class _LLayer(nn.Module):
    """Pointwise affine map plus spectral convolution, then activation."""

    def __init__(self, width, n_modes, activation="gelu"):
        super().__init__()
        self.linear = nn.Linear(width, width)
        self.conv = SpectralConv(width, n_modes)
        self.activation = _activation(activation)

    def forward(self, v, basis):
        return self.activation(self.linear(v) + self.conv(v, basis))


def _reset_parameters(module, seed):
    """Seeded initialization in registration order.

    Affine weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero,
    spectral kernels ~ N(0, 1 / (width * n_modes)).
    """
    generator = torch.Generator()
    generator.manual_seed(seed)
    with torch.no_grad():
        for name, p in module.named_parameters():
            if name.endswith("bias"):
                p.zero_()
            elif name.endswith("kernel"):
                n_modes, width, _ = p.shape
                p.normal_(0.0, (width * n_modes) ** -0.5, generator=generator)
            else:
                bound = p.shape[1] ** -0.5
                p.uniform_(-bound, bound, generator=generator)


class NORM(nn.Module):
    """Neural operator on a Laplacian eigenbasis.

    Lifting ``P``, ``n_layers`` L-layers
    ``v <- act(W v + b + D(R(E(v))))`` and a two-layer projection ``Q``.
    ``E`` projects on the basis modes, ``R`` mixes channels mode by mode
    and ``D`` reconstructs on the nodes. All weights are shared across
    nodes, so the parameter count does not depend on the discretization.

    Parameters
    ----------
    c_in : int
        Number of input channels.
    c_out : int
        Number of output channels.
    width : int
        Hidden channel count ``d_w``.
    d_proj : int
        Hidden size of the projection.
    n_layers : int
        Number of L-layers.
    n_modes : int
        Number of basis modes ``d_M`` seen by each spectral convolution.
    activation : str
        ``"gelu"``, ``"relu"`` or ``"identity"``.
    seed : int
        Initialization seed.
    check_finite : bool
        If True, raise ``NumericsError`` as soon as an L-layer produces a
        non-finite value.
    """

    def __init__(
        self,
        c_in,
        c_out,
        width=16,
        d_proj=128,
        n_layers=4,
        n_modes=32,
        activation="gelu",
        seed=0,
        check_finite=False,
    ):
        super().__init__()
        if min(c_in, c_out, width, d_proj, n_modes) < 1 or n_layers < 0:
            raise ConfigError("NORM dimensions must be positive")
        self.hparams = dict(
            c_in=c_in,
            c_out=c_out,
            width=width,
            d_proj=d_proj,
            n_layers=n_layers,
            n_modes=n_modes,
            activation=activation,
        )
        self.c_in = c_in
        self.n_modes = n_modes
        self.check_finite = check_finite

        self.lift = nn.Linear(c_in, width)
        self.layers = nn.ModuleList(
            [_LLayer(width, n_modes, activation) for _ in range(n_layers)]
        )
        self.proj = nn.Sequential(
            nn.Linear(width, d_proj),
            _activation(activation),
            nn.Linear(d_proj, c_out),
        )
        self.to(torch.float64)
        _reset_parameters(self, seed)

    def forward(self, x, basis):
        """Apply the operator to nodal fields of shape (B, n_points, c_in).

        An unbatched (n_points, c_in) field is returned unbatched.
        """
        unbatched = x.dim() == 2
        if unbatched:
            x = x.unsqueeze(0)
        if x.shape[-1] != self.c_in:
            raise ShapeError(f"expected {self.c_in} input channels, got {x.shape[-1]}")
        basis = _basis_tensors(basis, x)

        v = self.lift(x)
        for i, layer in enumerate(self.layers):
            v = layer(v, basis)
            if self.check_finite and not torch.isfinite(v).all():
                raise NumericsError(f"non-finite activations after L-layer {i}")
        out = self.proj(v)
        return out.squeeze(0) if unbatched else out


def init_params(seed, c_in, c_out, d_w, d_proj, n_L, d_M, activation="gelu"):
    return NORM(c_in, c_out, d_w, d_proj, n_L, d_M, activation, seed=seed)


def parameter_count(model):
    return sum(p.numel() for p in model.parameters())


class FcNet(nn.Module):
    """Fully connected network between coefficient vectors.

    Parameters
    ----------
    in_features : int
    out_features : int
    hidden_layers : tuple of int
        Widths of the hidden layers.
    activation : str
    seed : int
    """

    def __init__(self, in_features, out_features, hidden_layers=(256, 256, 256, 256),
                 activation="gelu", seed=0):
        super().__init__()
        self.hparams = dict(
            in_features=in_features,
            out_features=out_features,
            hidden_layers=list(hidden_layers),
            activation=activation,
        )
        sizes = [in_features, *hidden_layers, out_features]
        modules = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            modules.append(nn.Linear(fan_in, fan_out))
            if i < len(sizes) - 2:
                modules.append(_activation(activation))
        self.net = nn.Sequential(*modules)
        self.to(torch.float64)
        _reset_parameters(self, seed)

    def forward(self, x):
        return self.net(x)


def _basis_arrays(prefix, basis):
    return {
        f"{prefix}.vectors": basis.vectors,
        f"{prefix}.values": basis.values,
        f"{prefix}.weights": basis.weights,
    }


def _basis_header(basis):
    return {"kind": basis.kind, "source": basis.source}


def _basis_from(prefix, header, arrays):
    return EigenBasis(
        header["kind"],
        arrays[f"{prefix}.vectors"],
        arrays[f"{prefix}.values"],
        arrays[f"{prefix}.weights"],
        header["source"],
    )


class _Operator(nn.Module):
    """Trained mapping from input functions to output functions.

    Subclasses turn ``(N, n_x, n_t, c)`` inputs into network inputs and
    network outputs back into fields. Inputs can be standardized per
    channel with statistics of the training split.
    """

    method = None

    def __init__(self):
        super().__init__()
        self.register_buffer("input_mean", None)
        self.register_buffer("input_scale", None)

    def set_standardization(self, mean, scale):
        self.input_mean = torch.as_tensor(mean, dtype=torch.float64)
        self.input_scale = torch.as_tensor(scale, dtype=torch.float64)

    def _network_inputs(self, a):
        raise NotImplementedError

    def encode_inputs(self, a):
        x = self._network_inputs(torch.as_tensor(a, dtype=torch.float64))
        if self.input_mean is not None:
            x = (x - self.input_mean) / self.input_scale
        return x

    def encode_targets(self, u):
        return torch.as_tensor(u, dtype=torch.float64)

    def to_fields(self, out):
        raise NotImplementedError

    @property
    def trains_on_fields(self):
        return True

    def loss(self, x, y, strict=True):
        """Relative L2 loss between the network output and encoded targets."""
        out = self(x)
        if self.trains_on_fields:
            out = self.to_fields(out)
        return relative_l2_loss(out, y, strict=strict)

    def predict(self, a):
        """Output fields of shape (N, n_x, n_t, c) for inputs ``a``."""
        with torch.no_grad():
            return self.to_fields(self(self.encode_inputs(a))).numpy()

    def _standardization_arrays(self):
        if self.input_mean is None:
            return {}
        return {
            "input_mean": self.input_mean.numpy(),
            "input_scale": self.input_scale.numpy(),
        }


class ReducedOrderOperator(_Operator):
    """NORM network wrapped by the unequal-domain encoder or decoder.

    Increase kinds run the network on the input domain and decode its
    ``c_u * d`` output channels along the reduced axis. Decrease kinds
    encode the inputs along the reduced axis and run the network on the
    output domain.

    Parameters
    ----------
    kind : MappingKind
    network : NORM
    network_basis : EigenBasis
        Laplacian or Fourier basis of the network domain, ``n_modes``
        columns.
    reduction_basis : EigenBasis
        Basis of the reduced axis (POD, Fourier or LBO).
    out_channels : int
        Channels of the output functions.
    reconstruction : {"online", "offline"}
        Whether increase kinds are trained on decoded fields or on
        encoded targets.
    """

    method = "ro_norm"

    def __init__(self, kind, network, network_basis, reduction_basis, out_channels,
                 reconstruction="online"):
        super().__init__()
        self.kind = MappingKind(kind)
        self.network = network
        self.network_basis = network_basis
        self.reduction_basis = reduction_basis
        self.out_channels = out_channels
        self.reconstruction = reconstruction

    @property
    def trains_on_fields(self):
        return not (self.kind.is_increase and self.reconstruction == "offline")

    def forward(self, x):
        return self.network(x, self.network_basis)

    def _network_inputs(self, a):
        if self.kind.is_increase:
            return a.reshape(a.shape[0], -1, a.shape[-1])
        return encode_array(a, self.reduction_basis, self.kind.reduce_axis)

    def encode_targets(self, u):
        u = torch.as_tensor(u, dtype=torch.float64)
        if self.trains_on_fields:
            return u
        return encode_array(u, self.reduction_basis, self.kind.reduce_axis)

    def to_fields(self, out):
        if self.kind.is_increase:
            return decode_array(
                out, self.reduction_basis, self.kind.reduce_axis, self.out_channels
            )
        if self.kind.network_domain == "space":
            return out.unsqueeze(2)
        return out.unsqueeze(1)

    def checkpoint(self):
        header = {
            "method": self.method,
            "kind": self.kind.value,
            "reconstruction": self.reconstruction,
            "out_channels": self.out_channels,
            "network": self.network.hparams,
            "network_basis": _basis_header(self.network_basis),
            "reduction_basis": _basis_header(self.reduction_basis),
        }
        arrays = _basis_arrays("network_basis", self.network_basis)
        arrays.update(_basis_arrays("reduction_basis", self.reduction_basis))
        arrays.update(self._standardization_arrays())
        return header, arrays

    @classmethod
    def from_checkpoint(cls, header, arrays):
        operator = cls(
            header["kind"],
            NORM(**header["network"]),
            _basis_from("network_basis", header["network_basis"], arrays),
            _basis_from("reduction_basis", header["reduction_basis"], arrays),
            header["out_channels"],
            header["reconstruction"],
        )
        if "input_mean" in arrays:
            operator.set_standardization(arrays["input_mean"], arrays["input_scale"])
        return operator


class PcaNetOperator(_Operator):
    """Fully connected network between PCA coefficients of whole samples."""

    method = "pca_net"

    def __init__(self, network, input_basis, output_basis, output_shape):
        super().__init__()
        self.network = network
        self.input_basis = input_basis
        self.output_basis = output_basis
        self.output_shape = tuple(output_shape)

    @property
    def trains_on_fields(self):
        return False

    def forward(self, x):
        return self.network(x)

    def _network_inputs(self, a):
        V = torch.as_tensor(self.input_basis.vectors)
        return a.reshape(a.shape[0], -1) @ V

    def encode_targets(self, u):
        u = torch.as_tensor(u, dtype=torch.float64)
        return u.reshape(u.shape[0], -1) @ torch.as_tensor(self.output_basis.vectors)

    def to_fields(self, out):
        V = torch.as_tensor(self.output_basis.vectors, dtype=out.dtype)
        return (out @ V.T).reshape(out.shape[0], *self.output_shape)

    def checkpoint(self):
        header = {
            "method": self.method,
            "output_shape": list(self.output_shape),
            "network": self.network.hparams,
            "input_basis": _basis_header(self.input_basis),
            "output_basis": _basis_header(self.output_basis),
        }
        arrays = _basis_arrays("input_basis", self.input_basis)
        arrays.update(_basis_arrays("output_basis", self.output_basis))
        arrays.update(self._standardization_arrays())
        return header, arrays

    @classmethod
    def from_checkpoint(cls, header, arrays):
        operator = cls(
            FcNet(**header["network"]),
            _basis_from("input_basis", header["input_basis"], arrays),
            _basis_from("output_basis", header["output_basis"], arrays),
            header["output_shape"],
        )
        if "input_mean" in arrays:
            operator.set_standardization(arrays["input_mean"], arrays["input_scale"])
        return operator


class ReducedFcOperator(_Operator):
    """Fully connected network on flattened weight fields.

    Same encoder and decoder as ``ReducedOrderOperator``, but the network
    sees every point of the network domain at once as one flat vector
    instead of acting through a spectral basis.

    Parameters
    ----------
    kind : MappingKind
    network : FcNet
    reduction_basis : EigenBasis
    out_channels : int
    n_points : int
        Points of the network domain.
    reconstruction : {"online", "offline"}
    """

    method = "ro_fc_nn"

    def __init__(self, kind, network, reduction_basis, out_channels, n_points,
                 reconstruction="online"):
        super().__init__()
        self.kind = MappingKind(kind)
        self.network = network
        self.reduction_basis = reduction_basis
        self.out_channels = out_channels
        self.n_points = n_points
        self.reconstruction = reconstruction

    @property
    def trains_on_fields(self):
        return not (self.kind.is_increase and self.reconstruction == "offline")

    def forward(self, x):
        return self.network(x)

    def _network_inputs(self, a):
        if self.kind.is_increase:
            return a.reshape(a.shape[0], -1)
        x = encode_array(a, self.reduction_basis, self.kind.reduce_axis)
        return x.reshape(x.shape[0], -1)

    def encode_targets(self, u):
        u = torch.as_tensor(u, dtype=torch.float64)
        if self.trains_on_fields:
            return u
        w = encode_array(u, self.reduction_basis, self.kind.reduce_axis)
        return w.reshape(w.shape[0], -1)

    def to_fields(self, out):
        out = out.reshape(out.shape[0], self.n_points, -1)
        if self.kind.is_increase:
            return decode_array(
                out, self.reduction_basis, self.kind.reduce_axis, self.out_channels
            )
        if self.kind.network_domain == "space":
            return out.unsqueeze(2)
        return out.unsqueeze(1)

    def checkpoint(self):
        header = {
            "method": self.method,
            "kind": self.kind.value,
            "reconstruction": self.reconstruction,
            "out_channels": self.out_channels,
            "n_points": self.n_points,
            "network": self.network.hparams,
            "reduction_basis": _basis_header(self.reduction_basis),
        }
        arrays = _basis_arrays("reduction_basis", self.reduction_basis)
        arrays.update(self._standardization_arrays())
        return header, arrays

    @classmethod
    def from_checkpoint(cls, header, arrays):
        operator = cls(
            header["kind"],
            FcNet(**header["network"]),
            _basis_from("reduction_basis", header["reduction_basis"], arrays),
            header["out_channels"],
            header["n_points"],
            header["reconstruction"],
        )
        if "input_mean" in arrays:
            operator.set_standardization(arrays["input_mean"], arrays["input_scale"])
        return operator
