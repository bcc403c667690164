"""Model configurations: layer recipes for both variants and the derived
tensor plan every weight archive must satisfy.

The "elic" variant stacks 3 residual bottlenecks per stage with attention
after the second and fourth analyzer stages (mirrored in the synthesizer);
"elic-sm" uses a single bottleneck per stage and no attention. Four stride-2
stages take pixels to the latent grid (/16); the hyper pair adds two more
(/64). Recipes are flat ordered op lists consumed by ``codec`` and mirrored
name-for-name by the training harness.
"""

from dataclasses import dataclass, field

from .errors import InvalidArgument
from .scctx import make_grouping

VARIANT_IDS = {"elic": 0, "elic-sm": 1}
VARIANT_NAMES = {v: k for k, v in VARIANT_IDS.items()}

THUMBNAIL_WIDTH = 64
THUMBNAIL_INPUT_CHANNELS = 128   # chunks 1-4 of the uneven grouping
PIXEL_ALIGN = 64                 # 4 main + 2 hyper stride-2 stages


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "elic"
    num_filters: int = 192        # width of intermediate transform features
    latent_channels: int = 320    # coded symbol channels

    def __post_init__(self):
        if self.variant not in VARIANT_IDS:
            raise InvalidArgument(f"unknown variant {self.variant!r}")
        if self.num_filters < 2 or self.num_filters % 2 != 0:
            raise InvalidArgument("num_filters must be even and >= 2")
        if self.latent_channels <= 128:
            raise InvalidArgument("latent_channels must exceed 128")

    @property
    def variant_id(self):
        return VARIANT_IDS[self.variant]

    @property
    def grouping(self):
        return make_grouping(self.latent_channels)

    @property
    def rb_per_stage(self):
        return 3 if self.variant == "elic" else 1

    @property
    def with_attention(self):
        return self.variant == "elic"

    # ---- recipes ----------------------------------------------------------

    def analysis_recipe(self):
        n, m = self.num_filters, self.latent_channels
        items = [("conv", "analysis.d0", 3, n, 5, 2, 2)]
        items += _rb_stack("analysis.s0", n, self.rb_per_stage)
        items += [("conv", "analysis.d1", n, n, 5, 2, 2)]
        items += _rb_stack("analysis.s1", n, self.rb_per_stage)
        if self.with_attention:
            items += [("attn", "analysis.attn1", n)]
        items += [("conv", "analysis.d2", n, n, 5, 2, 2)]
        items += _rb_stack("analysis.s2", n, self.rb_per_stage)
        items += [("conv", "analysis.d3", n, m, 5, 2, 2)]
        if self.with_attention:
            items += [("attn", "analysis.attn3", m)]
        return items

    def synthesis_recipe(self):
        n, m = self.num_filters, self.latent_channels
        items = []
        if self.with_attention:
            items += [("attn", "synthesis.attn0", m)]
        items += [("tconv", "synthesis.u0", m, n, 5, 2, 2)]
        items += _rb_stack("synthesis.s0", n, self.rb_per_stage)
        items += [("tconv", "synthesis.u1", n, n, 5, 2, 2)]
        if self.with_attention:
            items += [("attn", "synthesis.attn1", n)]
        items += _rb_stack("synthesis.s1", n, self.rb_per_stage)
        items += [("tconv", "synthesis.u2", n, n, 5, 2, 2)]
        items += _rb_stack("synthesis.s2", n, self.rb_per_stage)
        items += [("tconv", "synthesis.u3", n, 3, 5, 2, 2)]
        return items

    def hyper_analysis_recipe(self):
        n, m = self.num_filters, self.latent_channels
        return [
            ("conv", "hyper_analysis.l0", m, n, 3, 1, 1),
            ("relu",),
            ("conv", "hyper_analysis.l1", n, n, 5, 2, 2),
            ("relu",),
            ("conv", "hyper_analysis.l2", n, n, 5, 2, 2),
        ]

    def hyper_synthesis_recipe(self):
        n, m = self.num_filters, self.latent_channels
        return [
            ("tconv", "hyper_synthesis.l0", n, n, 5, 2, 2),
            ("relu",),
            ("tconv", "hyper_synthesis.l1", n, n, 5, 2, 2),
            ("relu",),
            ("conv", "hyper_synthesis.l2", n, 2 * m, 3, 1, 1),
        ]

    def thumbnail_recipe(self):
        w = THUMBNAIL_WIDTH
        items = [("conv", "thumb.l0", THUMBNAIL_INPUT_CHANNELS, w, 3, 1, 1),
                 ("relu",)]
        for i in (1, 2, 3):
            items += [("up2x",), ("conv", f"thumb.l{i}", w, w, 3, 1, 1),
                      ("relu",)]
        items += [("conv", "thumb.l4", w, 3, 3, 1, 1)]
        return items

    # ---- tensor plan ------------------------------------------------------

    def scctx_tensors(self):
        m = self.latent_channels
        g = self.grouping
        out = []
        for k in range(1, g.num_groups + 1):
            c = g.chunk(k)
            out += _conv_tensors(f"scctx.spatial.g{k}", c, 2 * c, 5)
            if k > 1:
                prev = g.offset(k)
                out += _conv_tensors(f"scctx.channel.g{k}.c0", prev, 64, 5)
                out += _conv_tensors(f"scctx.channel.g{k}.c1", 64, 2 * c, 5)
            w_in = 4 * c + 2 * m
            w1 = 3 * c + m
            w2 = max(4 * c, 64)
            out += _conv_tensors(f"scctx.agg.g{k}.c0", w_in, w1, 1)
            out += _conv_tensors(f"scctx.agg.g{k}.c1", w1, w2, 1)
            out += _conv_tensors(f"scctx.agg.g{k}.c2", w2, 2 * c, 1)
        return out

    def plan(self):
        """Every tensor a weight archive must provide: (name, shape, fan_in)."""
        out = []
        for recipe in (self.analysis_recipe(), self.synthesis_recipe(),
                       self.hyper_analysis_recipe(),
                       self.hyper_synthesis_recipe(),
                       self.thumbnail_recipe()):
            out += _recipe_tensors(recipe)
        out += self.scctx_tensors()
        n = self.num_filters
        out.append(("prior.mean", (n,), 1))
        out.append(("prior.scale", (n,), 1))
        return out


def _rb_stack(prefix, ch, count):
    return [("rb", f"{prefix}.rb{i}", ch) for i in range(count)]


def _conv_tensors(name, cin, cout, k):
    fan_in = cin * k * k
    return [(f"{name}.weight", (cout, cin, k, k), fan_in),
            (f"{name}.bias", (cout,), fan_in)]


def _rb_tensors(prefix, ch):
    half = ch // 2
    return (_conv_tensors(f"{prefix}.c0", ch, half, 1)
            + _conv_tensors(f"{prefix}.c1", half, half, 3)
            + _conv_tensors(f"{prefix}.c2", half, ch, 1))


def _attn_tensors(prefix, ch):
    out = []
    for branch in ("trunk", "gate"):
        for i in range(3):
            out += _rb_tensors(f"{prefix}.{branch}.rb{i}", ch)
    out += _conv_tensors(f"{prefix}.gate.proj", ch, ch, 1)
    return out


def _recipe_tensors(recipe):
    out = []
    for item in recipe:
        kind = item[0]
        if kind in ("conv", "tconv"):
            _, name, cin, cout, k, _, _ = item
            out += _conv_tensors(name, cin, cout, k)
        elif kind == "rb":
            out += _rb_tensors(item[1], item[2])
        elif kind == "attn":
            out += _attn_tensors(item[1], item[2])
        elif kind in ("relu", "up2x"):
            pass
        else:
            raise InvalidArgument(f"unknown recipe item {kind!r}")
    return out
