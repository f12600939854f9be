import numpy as np
import pytest

from blockmark.attacks import (
    AttackSpec,
    UnsupportedAttackError,
    apply_attack,
    apply_chain,
    brightness,
    contrast,
    crop_random,
    crop_window,
    gaussian_blur,
    gaussian_noise,
    jpeg,
    parse_attack,
    rotate90,
    seed_attack,
    splice_insert,
)
from blockmark.keying import get_seed
from blockmark.metrics import psnr
from blockmark.params import WatermarkParams
from blockmark.synth import synth_image


@pytest.fixture
def photo(rng):
    return synth_image(rng, 288, 384)


class TestJpeg:
    def test_high_quality_near_lossless(self, rng):
        smooth = np.tile(np.linspace(40, 200, 96).astype(np.uint8), (96, 1))
        img = np.stack([smooth] * 3, axis=-1)
        out = jpeg(img, 100)
        assert psnr(img, out) > 40

    def test_dims_unchanged(self, photo):
        assert jpeg(photo, 50).shape == photo.shape

    def test_deterministic(self, photo):
        assert (jpeg(photo, 50) == jpeg(photo, 50)).all()

    def test_quality_bounds(self, photo):
        with pytest.raises(ValueError):
            jpeg(photo, 0)


class TestBlur:
    def test_ksize_one_identity(self, photo):
        assert (gaussian_blur(photo, 1, 1.0) == photo).all()

    def test_constant_image_unchanged(self):
        img = np.full((50, 60, 3), 99, dtype=np.uint8)
        assert (gaussian_blur(img, 5, 1.0) == img).all()

    def test_smooths_noise(self, rng):
        img = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
        out = gaussian_blur(img, 5, 1.0)
        assert out.astype(float).std() < img.astype(float).std()

    def test_even_kernel_rejected(self, photo):
        with pytest.raises(ValueError):
            gaussian_blur(photo, 4, 1.0)


class TestNoise:
    def test_sigma_zero_identity(self, photo):
        assert (gaussian_noise(photo, 0.0, 1) == photo).all()

    def test_deterministic_given_seed(self, photo):
        a = gaussian_noise(photo, 0.05, 42)
        b = gaussian_noise(photo, 0.05, 42)
        c = gaussian_noise(photo, 0.05, 43)
        assert (a == b).all()
        assert (a != c).any()

    def test_empirical_std(self):
        img = np.full((400, 400, 3), 128, dtype=np.uint8)
        out = gaussian_noise(img, 0.05, 7)
        measured = (out.astype(float) - img.astype(float)).std()
        assert abs(measured - 255 * 0.05) / (255 * 0.05) < 0.05


class TestBrightnessContrast:
    def test_factor_one_identity(self, photo):
        assert (brightness(photo, 1.0) == photo).all()
        assert (contrast(photo, 1.0) == photo).all()

    def test_brightness_halves(self):
        img = np.full((10, 10, 3), 200, dtype=np.uint8)
        assert (brightness(img, 0.5) == 100).all()

    def test_contrast_halves_spread(self):
        img = np.zeros((2, 2, 3), dtype=np.uint8)
        img[0] = 100
        img[1] = 200
        out = contrast(img, 0.5)
        # grayscale mean is 150; spreads halve around it
        assert (out[0] == 125).all()
        assert (out[1] == 175).all()


class TestRotate:
    def test_four_turns_identity(self, photo):
        out = photo
        for _ in range(4):
            out = rotate90(out, 1)
        assert (out == photo).all()

    def test_dims_swap_on_odd_turns(self, photo):
        out = rotate90(photo, 1)
        assert out.shape == (photo.shape[1], photo.shape[0], 3)
        assert rotate90(photo, 2).shape == photo.shape


class TestCrop:
    def test_keep_one_identity(self, photo):
        assert (crop_random(photo, 1.0, 5) == photo).all()

    def test_area_ratio(self, photo):
        out = crop_random(photo, 0.5, 5)
        ratio = out.shape[0] * out.shape[1] / (photo.shape[0] * photo.shape[1])
        assert abs(ratio - 0.5) < 0.01

    def test_window_matches_crop(self, photo):
        top, left, h, w = crop_window(photo.shape, 0.7, 9)
        out = crop_random(photo, 0.7, 9)
        assert (out == photo[top : top + h, left : left + w]).all()

    def test_deterministic(self, photo):
        assert (crop_random(photo, 0.6, 11) == crop_random(photo, 0.6, 11)).all()


class TestSplice:
    def test_identity_when_same_content(self, photo):
        patch = photo[10:50, 20:80].copy()
        out = splice_insert(photo, patch, (10, 20))
        assert (out == photo).all()

    def test_patch_replaces_rectangle(self, photo):
        patch = np.zeros((30, 40, 3), dtype=np.uint8)
        out = splice_insert(photo, patch, (5, 6))
        assert (out[5:35, 6:46] == 0).all()
        assert (out[40:, :] == photo[40:, :]).all()

    def test_out_of_bounds_rejected(self, photo):
        with pytest.raises(ValueError):
            splice_insert(photo, np.zeros((10, 10, 3), dtype=np.uint8), (photo.shape[0] - 5, 0))


class TestSeedAttack:
    def test_every_block_changes_seed(self, rng):
        params = WatermarkParams()
        img = synth_image(rng, 288, 288)
        out = seed_attack(img, params, "nearest")
        m = params.block_size
        for ch in range(3):
            for i in range(img.shape[0] // m):
                for j in range(img.shape[1] // m):
                    before = img[i * m : (i + 1) * m, j * m : (j + 1) * m, ch]
                    after = out[i * m : (i + 1) * m, j * m : (j + 1) * m, ch]
                    assert get_seed(after) != get_seed(before)

    def test_directional_modes(self, rng):
        params = WatermarkParams()
        img = synth_image(rng, 96, 96)
        m = params.block_size
        up = seed_attack(img, params, "higher")
        down = seed_attack(img, params, "lower")
        for ch in range(3):
            base = get_seed(img[:m, :m, ch])
            assert get_seed(up[:m, :m, ch]) > base
            assert get_seed(down[:m, :m, ch]) < base

    def test_visible_damage(self, rng):
        params = WatermarkParams()
        img = synth_image(rng, 288, 384)
        out = seed_attack(img, params, "nearest")
        assert psnr(img, out) < 31

    def test_unknown_mode(self, rng):
        with pytest.raises(ValueError):
            seed_attack(synth_image(rng, 96, 96), WatermarkParams(), "sideways")


class TestSpecParsing:
    @pytest.mark.parametrize(
        "text,kind,args",
        [
            ("jpeg:50", "jpeg", (50,)),
            ("blur:5,1.0", "blur", (5, 1.0)),
            ("noise:0.05", "noise", (0.05,)),
            ("brightness:0.5", "brightness", (0.5,)),
            ("contrast:0.5", "contrast", (0.5,)),
            ("rotate90", "rotate90", (1,)),
            ("rotate90:3", "rotate90", (3,)),
            ("crop:0.7", "crop", (0.7,)),
            ("seed:nearest", "seed", ("nearest",)),
        ],
    )
    def test_parse_ok(self, text, kind, args):
        spec = parse_attack(text)
        assert spec.kind == kind
        assert spec.args == args
        assert parse_attack(spec.label()).args == args

    def test_parse_errors(self):
        with pytest.raises(ValueError):
            parse_attack("sharpen:3")
        with pytest.raises(ValueError):
            parse_attack("jpeg:many")
        with pytest.raises(ValueError):
            parse_attack("seed:sideways")

    def test_vae_stubs_recognised_but_unsupported(self, photo):
        spec = parse_attack("bmshj18")
        with pytest.raises(UnsupportedAttackError):
            apply_attack(photo, spec)
        with pytest.raises(UnsupportedAttackError):
            apply_attack(photo, parse_attack("cheng20"))

    def test_apply_chain(self, photo):
        specs = [parse_attack("rotate90"), parse_attack("rotate90:3")]
        out = apply_chain(photo, specs)
        assert (out == photo).all()

    def test_determinism_across_chain(self, photo):
        specs = [AttackSpec("noise", (0.02,), 5), AttackSpec("jpeg", (70,))]
        a = apply_chain(photo, specs)
        b = apply_chain(photo, specs)
        assert (a == b).all()

    def test_channel_count_preserved(self, photo):
        for text in ("jpeg:50", "blur:5,1.0", "noise:0.05", "brightness:0.5",
                     "contrast:0.5", "rotate90", "crop:0.7"):
            out = apply_attack(photo, parse_attack(text).with_seed(3))
            assert out.shape[2] == 3
