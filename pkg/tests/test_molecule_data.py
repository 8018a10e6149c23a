"""Molecule generator, rasterizer, corruptions and manifests."""
from __future__ import annotations

import numpy as np
import pytest

from core.foundation import ManifestError
from models.schemas import AugmentParams
from services.augmentation import augment, salt_and_pepper
from services.dataset_service import generate_dataset, generate_sample, load_manifest, recipe_line
from services.molecule_generator import MAX_ATOMS, VALENCE, MoleculeGraph, gen_molecule, hill_formula, label_for
from services.rasterizer import BACKGROUND, render
from services.tokenizer import build_vocab, decode, encode
from utils.images import load_image, save_pgm, save_png
from utils.rng import SplitMix64


def _graph(atoms, bonds, coords=None):
    coords = coords or tuple((0.3 + 0.1 * i, 0.5) for i in range(len(atoms)))
    return MoleculeGraph(atoms=tuple(atoms), bonds=tuple(bonds), coords=tuple(coords))


# ---------------------------------------------------------------------------
# Generator stream
# ---------------------------------------------------------------------------


def test_splitmix_reference_value():
    assert SplitMix64(0).next_u64() == 0xE220A8397B1DCDAF


def test_sample_streams_differ_by_index():
    assert SplitMix64.for_sample(7, 0).next_u64() != SplitMix64.for_sample(7, 1).next_u64()


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------


def test_single_carbon_is_methane():
    assert label_for(_graph(["C"], [])) == "InChI=1S/CH4"


def test_chain_label():
    ethanol = _graph(["C", "C", "O"], [(0, 1, 1), (1, 2, 1)])

    assert label_for(ethanol) == "InChI=1S/C2H6O/c1-2-3"


def test_ring_closure_label():
    cyclopropane = _graph(["C", "C", "C"], [(0, 1, 1), (1, 2, 1), (0, 2, 1)])

    assert label_for(cyclopropane) == "InChI=1S/C3H6/c1-2-3-1"


def test_branch_label():
    isobutane = _graph(["C", "C", "C", "C"], [(0, 1, 1), (0, 2, 1), (0, 3, 1)])

    assert label_for(isobutane) == "InChI=1S/C4H10/c1-2(3)-4"


def _relabel(graph, order):
    """Same molecule with atom ``order[k]`` stored at index k."""
    position = {old: new for new, old in enumerate(order)}
    bonds = tuple(
        (min(position[i], position[j]), max(position[i], position[j]), bond) for i, j, bond in graph.bonds
    )
    return MoleculeGraph(
        atoms=tuple(graph.atoms[old] for old in order),
        bonds=bonds,
        coords=tuple(graph.coords[old] for old in order),
    )


def test_label_ignores_atom_storage_order():
    rng = np.random.default_rng(0)
    for seed in range(60):
        graph, label = gen_molecule(SplitMix64(seed))
        for _ in range(3):
            assert label_for(_relabel(graph, rng.permutation(len(graph.atoms)).tolist())) == label


def test_tied_atoms_are_ordered_by_their_neighbours():
    # Two methyls hang off atom 0; an ethyl arm and an amine hang off atom 3.
    graph = _graph(
        ["C", "C", "C", "C", "C", "C", "N"],
        [(0, 1, 1), (0, 2, 1), (0, 3, 1), (3, 4, 1), (4, 5, 1), (3, 6, 1)],
    )
    expected = label_for(graph)

    for order in ([6, 5, 4, 3, 2, 1, 0], [3, 0, 5, 1, 6, 2, 4], [1, 2, 0, 4, 6, 3, 5]):
        assert label_for(_relabel(graph, order)) == expected


def test_hill_formula_without_carbon_is_alphabetical():
    assert hill_formula(_graph(["N", "O"], [(0, 1, 1)])) == "H3NO"


def test_double_bond_reduces_hydrogens():
    ethene = _graph(["C", "C"], [(0, 1, 2)])

    assert hill_formula(ethene) == "C2H4"
    assert hill_formula(_graph(["C", "Cl"], [(0, 1, 1)])) == "CH3Cl"


def test_generation_is_deterministic():
    assert gen_molecule(SplitMix64(42)) == gen_molecule(SplitMix64(42))


def test_generated_graphs_respect_structure_rules():
    for seed in range(200):
        graph, label = gen_molecule(SplitMix64(seed))
        pairs = [(i, j) for i, j, _ in graph.bonds]

        assert 1 <= len(graph.atoms) <= MAX_ATOMS
        assert graph.is_connected()
        assert all(i != j for i, j in pairs)
        assert len(set(pairs)) == len(pairs)
        assert all(order in (1, 2) for _, _, order in graph.bonds)
        assert all(0.0 <= x <= 1.0 and 0.0 <= y <= 1.0 for x, y in graph.coords)
        assert all(graph.bond_order_sum(i) <= VALENCE[a] for i, a in enumerate(graph.atoms))
        assert label == label_for(graph)
        assert label.startswith("InChI=1S/")


def test_generated_labels_round_trip_through_their_vocab():
    labels = [gen_molecule(SplitMix64(seed))[1] for seed in range(100)]
    vocab = build_vocab(labels)

    for label in labels:
        assert decode(vocab, encode(vocab, label)) == label


# ---------------------------------------------------------------------------
# Rendering / corruption
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("size", [224, 384])
def test_render_size_and_determinism(size):
    graph, _ = gen_molecule(SplitMix64(3))

    first = render(graph, size).image
    second = render(graph, size).image

    assert first.shape == (size, size)
    assert first.dtype == np.uint8
    assert first.tobytes() == second.tobytes()


def test_single_carbon_is_almost_blank():
    image = render(_graph(["C"], [], [(0.5, 0.5)]), 224).image

    assert (image == BACKGROUND).mean() > 0.99


def test_double_bond_draws_a_second_line():
    single = render(_graph(["C", "C"], [(0, 1, 1)], [(0.3, 0.5), (0.7, 0.5)]), 64)
    double = render(_graph(["C", "C"], [(0, 1, 2)], [(0.3, 0.5), (0.7, 0.5)]), 64)

    assert (double.image == 0).sum() > (single.image == 0).sum()
    assert list(double.double_bond_lines) == [0]


def test_heteroatoms_get_a_glyph():
    rendered = render(_graph(["N"], [], [(0.5, 0.5)]), 64)
    left, top, right, bottom = rendered.glyph_boxes[0]

    assert (rendered.image[top : bottom + 1, left : right + 1] == 0).any()


def test_zero_params_are_identity():
    rendered = render(gen_molecule(SplitMix64(5))[0], 224)

    out = augment(rendered, SplitMix64(1), AugmentParams())

    assert out.tobytes() == rendered.image.tobytes()


def test_salt_and_pepper_rate_on_gray_image():
    image = np.full((384, 384), 128, dtype=np.uint8)
    p = 0.05

    out, hit = salt_and_pepper(image, p, np.random.default_rng(11))

    n = image.size
    flipped = int((out != 128).sum())
    assert flipped == int(hit.sum())
    assert abs(flipped - p * n) < 4 * np.sqrt(n * p * (1 - p))
    assert set(np.unique(out[hit]).tolist()) <= {0, 255}


def test_augmentation_is_deterministic_and_label_free():
    params = AugmentParams(sp_density=0.02, atom_drop=0.5, double_to_single=0.5, artifact_strokes=3)

    first_image, first_label = generate_sample(9, 4, 224, params)
    second_image, second_label = generate_sample(9, 4, 224, params)
    _, plain_label = generate_sample(9, 4, 224, AugmentParams())

    assert first_image.tobytes() == second_image.tobytes()
    assert first_label == second_label == plain_label


def test_atom_drop_erases_the_glyph():
    rendered = render(_graph(["N"], [], [(0.5, 0.5)]), 64)
    left, top, right, bottom = rendered.glyph_boxes[0]

    out = augment(rendered, SplitMix64(0), AugmentParams(atom_drop=1.0))

    assert (out[top : bottom + 1, left : right + 1] == BACKGROUND).all()


def test_double_to_single_removes_the_second_line():
    graph = _graph(["C", "C"], [(0, 1, 2)], [(0.3, 0.5), (0.7, 0.5)])
    rendered = render(graph, 64)

    out = augment(rendered, SplitMix64(0), AugmentParams(double_to_single=1.0))

    assert out.tobytes() == render(graph.with_bond_order(0, 1), 64).image.tobytes()


# ---------------------------------------------------------------------------
# Datasets / manifests
# ---------------------------------------------------------------------------


def test_dataset_is_reproducible_from_its_recipe(tmp_path):
    first = generate_dataset(tmp_path / "a", count=4, size=64, seed=12)
    second = generate_dataset(tmp_path / "b", count=4, size=64, seed=12)

    assert first.labels == second.labels
    for name in ("sample_00000.pgm", "sample_00003.pgm", "manifest.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    recipe = (tmp_path / "a" / "recipe.txt").read_text(encoding="utf-8").strip()
    assert recipe == recipe_line(tmp_path / "a", 4, 64, 12, AugmentParams())
    assert "--seed 12" in recipe


def test_generated_manifest_loads_as_synthetic(tmp_path):
    generate_dataset(tmp_path, count=3, size=64, seed=1)

    manifest = load_manifest(tmp_path / "manifest.tsv")

    assert len(manifest) == 3
    assert manifest.source == "synthetic"
    assert load_image(manifest.rows[0].path).shape == (64, 64)


def test_external_manifest_with_png_and_no_header(tmp_path):
    save_png(tmp_path / "one.png", np.full((8, 8), 255, dtype=np.uint8))
    save_pgm(tmp_path / "two.pgm", np.zeros((8, 8), dtype=np.uint8))
    (tmp_path / "m.tsv").write_text("one.png\tInChI=1S/CH4\ntwo.pgm\tInChI=1S/H2O\n", encoding="utf-8")

    manifest = load_manifest(tmp_path / "m.tsv")

    assert manifest.source == "external"
    assert manifest.labels == ["InChI=1S/CH4", "InChI=1S/H2O"]
    assert [row.line for row in manifest.rows] == [1, 2]


def test_empty_manifest_has_no_samples(tmp_path):
    (tmp_path / "m.tsv").write_text("", encoding="utf-8")

    with pytest.raises(ManifestError, match="no samples"):
        load_manifest(tmp_path / "m.tsv")


def test_missing_manifest_file(tmp_path):
    with pytest.raises(ManifestError, match="not found"):
        load_manifest(tmp_path / "absent.tsv")


def test_missing_image_names_line_and_path(tmp_path):
    save_pgm(tmp_path / "ok.pgm", np.zeros((8, 8), dtype=np.uint8))
    (tmp_path / "m.tsv").write_text("path\tlabel\nok.pgm\tC\nnope.pgm\tC\n", encoding="utf-8")

    with pytest.raises(ManifestError) as excinfo:
        load_manifest(tmp_path / "m.tsv")

    assert ":3" in excinfo.value.message
    assert "nope.pgm" in excinfo.value.message


def test_malformed_row_names_its_line(tmp_path):
    (tmp_path / "m.tsv").write_text("path\tlabel\njust-one-column\n", encoding="utf-8")

    with pytest.raises(ManifestError) as excinfo:
        load_manifest(tmp_path / "m.tsv")

    assert excinfo.value.details["line"] == 2


def test_unreadable_image(tmp_path):
    (tmp_path / "bad.pgm").write_text("not an image", encoding="utf-8")
    (tmp_path / "m.tsv").write_text("bad.pgm\tC\n", encoding="utf-8")

    with pytest.raises(ManifestError, match="unreadable"):
        load_manifest(tmp_path / "m.tsv")


def test_label_outside_vocab(tmp_path):
    save_pgm(tmp_path / "ok.pgm", np.zeros((8, 8), dtype=np.uint8))
    (tmp_path / "m.tsv").write_text("ok.pgm\tCN\n", encoding="utf-8")

    with pytest.raises(ManifestError, match="tokenize"):
        load_manifest(tmp_path / "m.tsv", vocab=build_vocab(["CC"]))
