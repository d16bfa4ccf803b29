"""Tests for validation utilities."""


from src.validation import (
    validate_finite,
    validate_non_negative,
    validate_override,
    validate_positive,
    validate_positive_int,
    validate_probability,
    validate_sequence_name,
    validate_vector,
)


class TestValidateNumbers:
    """Tests for numeric validators."""

    def test_finite(self):
        """Test finite numbers and their rejects."""
        assert validate_finite(0, "x").valid
        assert validate_finite(-2.5, "x").valid
        assert not validate_finite(float("nan"), "x").valid
        assert not validate_finite(float("inf"), "x").valid

    def test_non_numbers(self):
        """Test strings, None and booleans."""
        for value in ("1.0", None, True, [1.0]):
            result = validate_finite(value, "x")
            assert not result.valid
            assert "must be a number" in result.error_message

    def test_positive(self):
        """Test strictly positive values."""
        assert validate_positive(0.1, "range").valid
        result = validate_positive(0.0, "range")
        assert not result.valid
        assert "range must be positive" in result.error_message

    def test_non_negative(self):
        """Test values >= 0."""
        assert validate_non_negative(0.0, "noise").valid
        assert not validate_non_negative(-1e-9, "noise").valid

    def test_positive_int(self):
        """Test integer counts."""
        assert validate_positive_int(1, "frames").valid
        assert not validate_positive_int(0, "frames").valid
        assert not validate_positive_int(2.0, "frames").valid
        assert not validate_positive_int(True, "frames").valid

    def test_probability(self):
        """Test the closed unit interval."""
        assert validate_probability(0.0, "p").valid
        assert validate_probability(1.0, "p").valid
        result = validate_probability(1.01, "p")
        assert not result.valid
        assert "between 0 and 1" in result.error_message


class TestValidateVector:
    """Tests for fixed-length number lists."""

    def test_valid(self):
        """Test lists and tuples of numbers."""
        assert validate_vector([1, 2.0, -3], 3).valid
        assert validate_vector((0.0, 0.0), 2).valid

    def test_wrong_length(self):
        """Test a short list."""
        result = validate_vector([1, 2], 3)
        assert not result.valid
        assert "expected 3 numbers, got 2" in result.error_message

    def test_not_a_list(self):
        """Test scalars and strings."""
        assert not validate_vector(3.0, 3).valid
        assert not validate_vector("abc", 3).valid

    def test_non_numeric_entry(self):
        """Test lists with strings or NaN."""
        assert not validate_vector([1, "2", 3], 3).valid
        assert not validate_vector([1, float("nan"), 3], 3).valid


class TestValidateSequenceName:
    """Tests for sequence name validation."""

    def test_valid_names(self):
        """Test KITTI-style and free-form names."""
        assert validate_sequence_name("0000").valid
        assert validate_sequence_name("0019").valid
        assert validate_sequence_name("handover_run-2").valid

    def test_invalid_empty(self):
        """Test empty sequence name."""
        result = validate_sequence_name("")
        assert not result.valid
        assert "empty" in result.error_message.lower()

    def test_invalid_whitespace_only(self):
        """Test whitespace-only sequence name."""
        assert not validate_sequence_name("   ").valid

    def test_invalid_too_long(self):
        """Test sequence name that's too long."""
        result = validate_sequence_name("a" * 65)
        assert not result.valid
        assert "too long" in result.error_message.lower()

    def test_invalid_path_components(self):
        """Names must not escape the output directory."""
        for name in ("../0000", "a/b", "a\\b", "..", ".", "bad\x00name"):
            assert not validate_sequence_name(name).valid


class TestValidateOverride:
    """Tests for KEY=VALUE override validation."""

    def test_valid(self):
        """Test well-formed overrides."""
        assert validate_override("track.min_hits=1").valid
        assert validate_override("input.category=").valid

    def test_invalid(self):
        """Test missing separator or key."""
        assert not validate_override("track.min_hits").valid
        result = validate_override("=1")
        assert not result.valid
        assert "KEY=VALUE" in result.error_message
