import matplotlib.pyplot as plt

from cookspace import EvalReport, save_eval_figure, save_loss_curve
from cookspace.evaluation import IMAGE_TO_RECIPE, RECIPE_TO_IMAGE

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def make_reports():
    reports = {}
    for direction, shift in ((IMAGE_TO_RECIPE, 0.0), (RECIPE_TO_IMAGE, 1.0)):
        reports[direction] = EvalReport(
            direction,
            bag_size=50,
            medr=[5.0 + shift, 6.0 + shift, 5.5 + shift],
            r_at={
                1: [10.0, 12.0, 11.0],
                5: [40.0 + shift, 44.0, 42.0],
                10: [70.0, 74.0 + shift, 72.0],
            },
        )
    return reports


class TestLossCurve:
    def test_writes_png(self, tmp_path):
        target = tmp_path / "loss.png"
        returned = save_loss_curve([0.9, 0.5, 0.3], target)
        assert returned == target
        assert target.read_bytes().startswith(PNG_MAGIC)

    def test_identical_histories_render_identical_bytes(self, tmp_path):
        a = save_loss_curve([0.9, 0.5, 0.31], tmp_path / "a.png")
        b = save_loss_curve([0.9, 0.5, 0.31], tmp_path / "b.png")
        assert a.read_bytes() == b.read_bytes()

    def test_different_histories_render_different_bytes(self, tmp_path):
        a = save_loss_curve([0.9, 0.5, 0.31], tmp_path / "a.png")
        b = save_loss_curve([0.9, 0.6, 0.31], tmp_path / "b.png")
        assert a.read_bytes() != b.read_bytes()

    def test_closes_its_figure(self, tmp_path):
        before = plt.get_fignums()
        save_loss_curve([1.0, 0.4], tmp_path / "loss.png")
        assert plt.get_fignums() == before


class TestEvalFigure:
    def test_writes_png(self, tmp_path):
        target = tmp_path / "report.png"
        returned = save_eval_figure(make_reports(), target)
        assert returned == target
        assert target.read_bytes().startswith(PNG_MAGIC)

    def test_identical_reports_render_identical_bytes(self, tmp_path):
        a = save_eval_figure(make_reports(), tmp_path / "a.png")
        b = save_eval_figure(make_reports(), tmp_path / "b.png")
        assert a.read_bytes() == b.read_bytes()

    def test_single_direction_renders(self, tmp_path):
        reports = make_reports()
        del reports[RECIPE_TO_IMAGE]
        target = save_eval_figure(reports, tmp_path / "one.png")
        assert target.read_bytes().startswith(PNG_MAGIC)

    def test_closes_its_figure(self, tmp_path):
        before = plt.get_fignums()
        save_eval_figure(make_reports(), tmp_path / "report.png")
        assert plt.get_fignums() == before
