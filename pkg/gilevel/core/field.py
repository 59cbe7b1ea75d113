import inspect
from typing import Callable, Generic, Type, TypeVar, Union

from gilevel.core import utils
from gilevel.core.utils import ConfigurationError

# `C` is the host component type, `F` the annotated type of the field.
C = TypeVar("C")
F = TypeVar("F")


def _find_annotation(host_component_class: Type, name: str):
    for super_class in inspect.getmro(host_component_class):
        if name in getattr(super_class, "__annotations__", {}):
            return super_class.__annotations__[name]
    return utils.missing


class Field(Generic[C, F]):
    """A typed, configurable parameter of a component.

    The default is either an immutable value or a function taking no argument or
    the component instance. Defaults are generated at most once per instance.
    Matrices and vectors therefore need a `None` or callable default, e.g.
    `S0: Optional[MatrixLike] = Field(None)`.
    """

    def __init__(
        self,
        default: Union[
            utils.Missing, F, Callable[[], F], Callable[[C], F]
        ] = utils.missing,
        *,
        allow_missing: bool = False,
    ):
        self.name = None
        self.allow_missing = allow_missing
        self.host_component_class = None
        self.type = None
        self._registered = False
        self._return_annotation = inspect.Signature.empty

        if allow_missing and default is not utils.missing:
            raise ValueError(
                "If a `Field` has `allow_missing=True`, no default can be provided."
            )

        if default is utils.missing or utils.is_immutable(default):
            self._default = default
            return

        if inspect.isfunction(default):
            parameters = list(inspect.signature(default).parameters.values())
            if len(parameters) <= 1 and not any(
                p.kind in (p.VAR_POSITIONAL, p.VAR_KEYWORD) for p in parameters
            ):
                self._default = default
                self._return_annotation = inspect.signature(default).return_annotation
                return

        raise TypeError(
            "If `default` is passed to `Field`, it must be either:\n"
            "- An immutable value (int, float, bool, string, None or a tuple of "
            "these).\n"
            "- A function accepting no argument or a single argument (`self`) "
            "that returns the default value.\n"
            f"Received: {default}."
        )

    # PEP 487: called with the host class and attribute name when the class
    # body is executed.
    def __set_name__(self, host_component_class: Type[C], name: str):
        if self._registered:
            raise ValueError("This field has already been registered to a component.")
        if name.startswith("_"):
            raise ValueError("Field names cannot start with underscores.")

        type_annotation = _find_annotation(host_component_class, name)
        if (
            self._return_annotation is not inspect.Signature.empty
            and type_annotation is not utils.missing
            and type_annotation != self._return_annotation
        ):
            raise TypeError(
                f"Two non-equal type annotations found for field '{name}': "
                f"{type_annotation} and {self._return_annotation}."
            )
        if type_annotation is utils.missing:
            if self._return_annotation is inspect.Signature.empty:
                raise TypeError(
                    f"Unable to find a type annotation for field '{name}' on class "
                    f"'{host_component_class.__name__}'. Declare fields as "
                    "`name: type = Field(default)` inside the component class body."
                )
            type_annotation = self._return_annotation

        self.name = name
        self.host_component_class = host_component_class
        self.type = type_annotation
        self._registered = True

    def __repr__(self) -> str:
        if not self._registered:
            return "<Unregistered Field>"
        return (
            f"<Field '{self.name}' of {self.host_component_class.__name__} with type "
            f"{self.type}>"
        )

    @property
    def has_default(self) -> bool:
        if not self._registered:
            raise ValueError("This field has not been registered to a component.")
        return self._default is not utils.missing

    def _check_host(self, instance: C) -> None:
        if not isinstance(instance, self.host_component_class):
            raise TypeError(
                f"Field '{self.name}' belongs to component "
                f"'{self.host_component_class.__name__}'; `get_default` must be called "
                f"with an instance of it. Received: {repr(instance)}."
            )

    def _missing_default(self, message: str):
        # `allow_missing` fields behave as absent attributes.
        if self.allow_missing:
            return AttributeError(message)
        return ConfigurationError(message)

    def get_default(self, instance: C) -> F:
        if not self.has_default:
            raise self._missing_default(
                f"Field '{self.name}' has no default or configured value."
            )
        self._check_host(instance)

        if not inspect.isfunction(self._default):
            return self._default
        if len(inspect.signature(self._default).parameters) == 0:
            value = self._default()  # type: ignore
        else:
            value = self._default(instance)  # type: ignore

        if utils.is_component_instance(value):
            raise TypeError(
                f"Field '{self.name}' of component '{instance.__component_name__}' "
                "returned a component instance as its default value. Use "
                "`ComponentField` to nest components."
            )
        return value


class ComponentField(Field, Generic[C, F]):
    """A field holding a nested sub-component.

    The annotation is the base type every admissible sub-component inherits
    from, e.g. `w_spec: WSpec = ComponentField(FixedW)`. The optional default is
    a component class, instantiated without arguments when nothing is
    configured; the child then inherits same-named field values from its
    ancestors.
    """

    def __init__(
        self,
        default: Union[utils.Missing, Type[F]] = utils.missing,
        *,
        allow_missing: bool = False,
    ):
        if allow_missing and default is not utils.missing:
            raise ValueError(
                "If a `Field` has `allow_missing=True`, no default can be provided."
            )
        if default is not utils.missing and not utils.is_component_class(default):
            if utils.is_component_instance(default):
                raise TypeError(
                    "The `default` passed to `ComponentField` must be a component "
                    f"class, not a component instance. Received: {repr(default)}."
                )
            raise TypeError(
                "The `default` passed to `ComponentField` must be a component class."
            )

        self.name = utils.missing
        self.allow_missing = allow_missing
        self.host_component_class = utils.missing
        self.type = utils.missing
        self._registered = False
        self._default = default
        self._return_annotation = inspect.Signature.empty

    def __set_name__(self, host_component_class: Type[C], name: str):
        if self._registered:
            raise ValueError("This field has already been registered to a component.")
        if name.startswith("_"):
            raise ValueError("Field names cannot start with underscores.")
        type_annotation = _find_annotation(host_component_class, name)
        if type_annotation is utils.missing:
            raise TypeError(
                f"Unable to find a type annotation for component field '{name}' on "
                f"class '{host_component_class.__name__}'. Declare it as "
                "`name: BaseType = ComponentField(DefaultClass)`."
            )

        self.name = name
        self.host_component_class = host_component_class
        self.type = type_annotation
        self._registered = True

    def get_default(self, component_instance: C) -> F:
        if not self.has_default:
            raise self._missing_default(
                f"ComponentField '{self.name}' has no default or configured component "
                "class."
            )
        self._check_host(component_instance)
        return self._default()
