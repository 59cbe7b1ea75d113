from typing import Optional, Tuple

import pytest

from gilevel.core.component import component
from gilevel.core.field import ComponentField, Field
from gilevel.core.utils import ConfigurationError


def test_mutable_defaults_are_rejected():
    with pytest.raises(TypeError, match="it must be either:"):
        Field([0.9, 0.95])


def test_defaults_taking_many_arguments_are_rejected():
    with pytest.raises(TypeError, match="it must be either:"):
        Field(lambda a, b: a + b)


def test_no_default():
    class A:
        n0: float = Field()

    assert not A.n0.has_default
    with pytest.raises(ConfigurationError, match="Field 'n0' has no default"):
        A.n0.get_default(A())


def test_immutable_defaults():
    class A:
        n0: float = Field(0.01)
        exact: bool = Field(False)
        deltas: Tuple[float, ...] = Field((0.9, 0.95))
        path: Optional[str] = Field(None)

    instance = A()
    for name, expected in [
        ("n0", 0.01),
        ("exact", False),
        ("deltas", (0.9, 0.95)),
        ("path", None),
    ]:
        field = getattr(A, name)
        assert field.has_default
        assert field.get_default(instance) == expected


def test_function_defaults():
    class A:
        p: int = 3
        seed: int = Field(lambda: 11)
        S0: Tuple[float, ...] = Field(lambda self: (1.0,) * self.p)

    instance = A()
    assert A.seed.get_default(instance) == 11
    assert A.S0.get_default(instance) == (1.0, 1.0, 1.0)


def test_decorated_default():
    class A:
        @Field
        def phi() -> float:
            return 0.9

    assert A.phi.type is float
    assert A.phi.get_default(A()) == 0.9


def test_conflicting_annotations():
    def default() -> int:
        return 1

    with pytest.raises((RuntimeError, TypeError)):

        class A:
            seed: float = Field(default)


def test_unannotated_field():
    with pytest.raises((RuntimeError, TypeError)):

        class A:
            phi = Field(1.0)


def test_unregistered_field():
    field = Field(5)
    assert repr(field) == "<Unregistered Field>"
    with pytest.raises(ValueError, match="not been registered"):
        field.has_default


def test_underscore_names_are_rejected():
    # Older interpreters wrap `__set_name__` errors in a RuntimeError.
    with pytest.raises((RuntimeError, ValueError)):

        class A:
            _phi: float = Field(1.0)


def test_get_default_checks_the_host():
    class A:
        phi: float = Field(1.0)

    with pytest.raises(TypeError, match="belongs to component 'A'"):
        A.phi.get_default(object())


def test_allow_missing():
    class A:
        path: Optional[str] = Field(allow_missing=True)

    assert A.path.allow_missing
    with pytest.raises(AttributeError):
        A.path.get_default(A())
    with pytest.raises(ValueError):
        Field(1.0, allow_missing=True)


class Spec:
    pass


@component
class FixedSpec(Spec):
    value: float = Field(1.0)


def test_component_field_rejects_instances():
    with pytest.raises(TypeError, match="not a component instance"):
        ComponentField(FixedSpec())
    with pytest.raises(TypeError, match="must be a component class"):
        ComponentField(Spec)


def test_component_field_without_default():
    class A:
        spec: Spec = ComponentField()

    assert not A.spec.has_default
    with pytest.raises(ConfigurationError, match="ComponentField 'spec' has no default"):
        A.spec.get_default(A())


def test_component_field_default_is_a_fresh_instance():
    class A:
        spec: Spec = ComponentField(FixedSpec)

    instance = A()
    first = A.spec.get_default(instance)
    second = A.spec.get_default(instance)
    assert isinstance(first, FixedSpec)
    assert first is not second


def test_component_field_allow_missing():
    assert ComponentField(allow_missing=True).allow_missing
    with pytest.raises(ValueError):
        ComponentField(FixedSpec, allow_missing=True)


def test_component_defaults_need_component_field():
    @component
    class A:
        spec: Spec = Field(lambda: FixedSpec())

    with pytest.raises(TypeError, match="Use\\s+`ComponentField`"):
        A().spec
