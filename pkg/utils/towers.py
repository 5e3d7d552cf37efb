"""Two small encoder towers (text and image) with hand-written backpropagation.

Each tower is an affine map, optionally preceded by one tanh hidden layer,
followed by L2 normalization of the output.
"""
import numpy as np

NORM_EPS = 1e-12


class Tower:
    def __init__(self, in_dim, out_dim, hidden=None, rng=None, params=None):
        self.dims = [in_dim] + ([hidden] if hidden else []) + [out_dim]
        self.n_layers = len(self.dims) - 1
        if params is not None:
            self.params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
            return
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = {}
        for i, (fan_in, fan_out) in enumerate(zip(self.dims, self.dims[1:])):
            self.params[f"W{i}"] = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
            self.params[f"b{i}"] = np.zeros(fan_out)

    def copy(self):
        clone = Tower.__new__(Tower)
        clone.dims = list(self.dims)
        clone.n_layers = self.n_layers
        clone.params = {k: v.copy() for k, v in self.params.items()}
        return clone

    def forward(self, x):
        """Unit-norm outputs for the rows of x, plus the cache backward() needs."""
        activations = [np.asarray(x, dtype=np.float64)]
        h = activations[0]
        for i in range(self.n_layers):
            h = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            if i < self.n_layers - 1:
                h = np.tanh(h)
            activations.append(h)
        norms = np.maximum(np.linalg.norm(h, axis=1, keepdims=True), NORM_EPS)
        out = h / norms
        return out, (activations, out, norms)

    def encode(self, x):
        return self.forward(x)[0]

    def backward(self, cache, d_out):
        activations, out, norms = cache
        # through y = u / |u|
        d = (d_out - out * (out * d_out).sum(axis=1, keepdims=True)) / norms
        grads = {}
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                d = d * (1.0 - activations[i + 1] ** 2)
            grads[f"W{i}"] = activations[i].T @ d
            grads[f"b{i}"] = d.sum(axis=0)
            if i > 0:
                d = d @ self.params[f"W{i}"].T
        return grads


class TowerPair:
    """Text and image towers sharing an output space, plus the fixed logit scale."""

    def __init__(self, text, image, logit_scale):
        self.text = text
        self.image = image
        self.logit_scale = float(logit_scale)

    @classmethod
    def initialize(cls, vocab_size, image_dim, embed_dim, logit_scale, seed,
                   text_hidden=None, image_hidden=None):
        text_rng, image_rng = (np.random.default_rng(s)
                               for s in np.random.SeedSequence(seed).spawn(2))
        return cls(Tower(vocab_size, embed_dim, text_hidden, text_rng),
                   Tower(image_dim, embed_dim, image_hidden, image_rng),
                   logit_scale)

    def copy(self):
        return TowerPair(self.text.copy(), self.image.copy(), self.logit_scale)

    def named_parameters(self):
        for name, value in self.text.params.items():
            yield f"text.{name}", value
        for name, value in self.image.params.items():
            yield f"image.{name}", value

    def parameter_norm(self):
        return float(np.sqrt(sum(float((v ** 2).sum()) for _, v in self.named_parameters())))

    def encode_text(self, x):
        return self.text.encode(x)

    def encode_image(self, x):
        return self.image.encode(x)


def bag_of_tokens(token_lists, vocab_size):
    """Indicator rows over the vocabulary; `token_lists` holds integer token indices."""
    x = np.zeros((len(token_lists), vocab_size))
    for row, tokens in enumerate(token_lists):
        x[row, np.asarray(tokens, dtype=np.int64)] = 1.0
    return x
