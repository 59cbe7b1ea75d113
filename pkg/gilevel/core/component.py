"""Configurable parameter bundles.

Every model, estimator and command in gilevel is a component: a class whose
parameters are declared as typed `Field`s (or `ComponentField`s for nested
bundles). A component can be used directly with keyword arguments,

```
config = ModelConfig(phi=0.9, w_spec=DiscountW(deltas=(0.9, 0.95)))
```

or configured from a flat dictionary of dotted keys, which is how the CLI and
config files drive it:

```
config = ModelConfig()
configure(config, {"phi": 0.9, "w_spec": "DiscountW", "w_spec.deltas": 0.95})
```

Values are resolved in this order: configured values (on the instance or any
ancestor declaring the same field), keyword arguments, the field default, and
finally the closest ancestor with a same-named field. A child therefore picks up
e.g. `seed` from the command that owns it unless it is configured explicitly.

`dict(component)` is the flattened configuration of the whole tree, and
`configure(fresh_instance, dict(component))` rebuilds an equivalent tree; the
report writers echo it so that every run can be reproduced from its output.
"""

import functools
import inspect
from typing import AbstractSet, Any, Dict, Iterator, List, Optional, Tuple, Type

from gilevel.core import utils
from gilevel.core.field import ComponentField, Field
from gilevel.core.utils import ConfigurationError


def _check_and_cache(instance, field: Field, value: Any) -> None:
    if not utils.type_check(value, field.type):
        raise TypeError(
            f"Field '{field.name}' of component '{instance.__component_name__}' is "
            f"annotated with type '{field.type}', which is not satisfied by "
            f"value {repr(value)}."
        )
    # Values are only frozen onto the instance once it is configured; before
    # that, `setattr` may still replace them.
    if instance.__component_configured__:
        object.__setattr__(instance, field.name, value)


def _resolve_field(fn, instance, name: str):
    field = instance.__component_fields__[name]

    for ancestor in utils.generate_component_ancestors_with_field(
        instance, field_name=name, include_instance=True
    ):
        if name in ancestor.__component_configured_field_values__:
            value = ancestor.__component_configured_field_values__[name]
            _check_and_cache(instance, field, value)
            instance.__component_instantiated_field_values__.pop(name, None)
            return value

    if name in instance.__component_instantiated_field_values__:
        value = instance.__component_instantiated_field_values__[name]
        _check_and_cache(instance, field, value)
        if instance.__component_configured__:
            del instance.__component_instantiated_field_values__[name]
        return value

    if name in instance.__component_default_field_values__:
        return instance.__component_default_field_values__[name]

    try:
        value = field.get_default(instance)
        if isinstance(field, ComponentField):
            value.__component_parent__ = instance
        instance.__component_default_field_values__[name] = value
    except (ConfigurationError, AttributeError) as e:
        parent = next(utils.generate_component_ancestors_with_field(instance, name), None)
        try:
            value = parent.__base_getattribute__(name)  # type: ignore
        except AttributeError:
            # Report the failure against this component, not the parent.
            raise e from None

    _check_and_cache(instance, field, value)
    return value


def _wrap_getattribute(component_cls: Type) -> None:
    fn = component_cls.__getattribute__  # type: ignore

    @functools.wraps(fn)
    def wrapped_fn(instance, name):
        if name not in fn(instance, "__component_fields__"):
            return fn(instance, name)
        if name in instance.__dict__:
            return instance.__dict__[name]
        return _resolve_field(fn, instance, name)

    component_cls.__base_getattribute__ = wrapped_fn
    component_cls.__getattribute__ = wrapped_fn


def base_getattr(instance, name: str):
    if utils.is_component_instance(instance):
        return instance.__class__.__base_getattribute__(instance, name)  # type: ignore
    return getattr(instance, name)


def _wrap_setattr(component_cls: Type) -> None:
    fn = component_cls.__setattr__  # type: ignore

    @functools.wraps(fn)
    def wrapped_fn(instance, name, value):
        if not isinstance(getattr(component_cls, name, None), Field):
            return fn(instance, name, value)
        field = getattr(component_cls, name)
        if instance.__component_configured__:
            raise ValueError(
                "Setting already configured component field values directly is "
                "prohibited; configure the component instead."
            )
        if utils.is_component_instance(value):
            if not isinstance(field, ComponentField):
                raise ValueError(
                    "Component instances can only be set as values for "
                    f"`ComponentField`s, but {instance.__component_name__}.{name} is "
                    "a `Field`."
                )
            if value.__component_configured__:
                raise ValueError(
                    "Component instances can only be set as values if they are not "
                    "yet configured."
                )
            value.__component_parent__ = instance
        instance.__component_fields_with_values_in_scope__.add(name)
        instance.__component_instantiated_field_values__[name] = value

    component_cls.__setattr__ = wrapped_fn


def _wrap_delattr(component_cls: Type) -> None:
    fn = component_cls.__delattr__  # type: ignore

    @functools.wraps(fn)
    def wrapped_fn(instance, name):
        if name in instance.__component_fields__:
            raise ValueError("Deleting component field values is prohibited.")
        return fn(instance, name)

    component_cls.__delattr__ = wrapped_fn


def _wrap_dir(component_cls: Type) -> None:
    fn = component_cls.__dir__  # type: ignore

    @functools.wraps(fn)
    def wrapped_fn(instance) -> List[str]:
        return list(set(fn(instance)) | set(instance.__component_fields__.keys()))

    component_cls.__dir__ = wrapped_fn


def _inherited(instance, field_name: str, value: Any) -> bool:
    parent = next(
        utils.generate_component_ancestors_with_field(instance, field_name), None
    )
    return parent is not None and base_getattr(parent, field_name) is value


# `dict(component)`, `len(component)` and `key in component` view the component
# tree as a flat mapping from dotted field names to values.


def __component_len__(instance) -> int:
    return len(list(iter(instance)))


def __component_contains__(instance, key: str) -> bool:
    if not isinstance(key, str):
        return False
    if "." not in key:
        return (
            key in instance.__component_fields__
            and key in instance.__component_fields_with_values_in_scope__
        )
    head, rest = key.split(".", 1)
    if isinstance(instance.__component_fields__.get(head), ComponentField):
        try:
            child = base_getattr(instance, head)
        except AttributeError:
            return False
        return utils.is_component_instance(child) and rest in child
    return False


def __component_iter__(instance) -> Iterator[Tuple[str, Any]]:
    for field_name, field in instance.__component_fields__.items():
        try:
            value = base_getattr(instance, field_name)
        except AttributeError:
            continue
        if _inherited(instance, field_name, value):
            continue
        if isinstance(field, ComponentField) and utils.is_component_instance(value):
            yield field_name, value.__class__.__name__
            for sub_name, sub_value in iter(value):
                yield f"{field_name}.{sub_name}", sub_value
        else:
            yield field_name, value


def config_lines(instance) -> List[str]:
    """The resolved configuration as `key=value` lines, parseable by
    `utils.read_config_file`."""
    return [f"{k}={utils.format_config_value(v)}" for k, v in iter(instance)]


INDENT = " " * 4


def _field_strings(instance, single_line: bool) -> Iterator[str]:
    for field_name, field in instance.__component_fields__.items():
        try:
            value = base_getattr(instance, field_name)
        except (ConfigurationError, AttributeError) as e:
            if isinstance(e, AttributeError) and field.allow_missing:
                value = utils.missing
            else:
                raise e from None

        is_inherited = value is not utils.missing and _inherited(
            instance, field_name, value
        )
        if utils.is_component_instance(value):
            if is_inherited:
                value = "<inherited component instance>"
            elif single_line:
                value = repr(value)
            else:
                value = f"\n{INDENT}".join(str(value).split("\n"))
        elif is_inherited:
            value = "<inherited value>"
        elif callable(value):
            value = "<callable>"
        elif isinstance(value, str):
            value = f'"{value}"'
        else:
            value = utils.format_config_value(value)
        yield f"{field_name}={value}"


def __component_repr__(instance):
    if not instance.__component_configured__:
        return f"<Unconfigured component '{instance.__component_name__}' instance>"
    joined = ", ".join(_field_strings(instance, single_line=True))
    return f"{instance.__class__.__name__}({joined})"


def __component_str__(instance):
    if not instance.__component_configured__:
        return f"<Unconfigured component '{instance.__component_name__}' instance>"
    joined = f",\n{INDENT}".join(_field_strings(instance, single_line=False))
    return f"{instance.__class__.__name__}(\n{INDENT}{joined}\n)"


def __component_init__(instance, **kwargs):
    """Accepts keyword arguments named after the component's fields."""
    for name, value in kwargs.items():
        if name not in instance.__component_fields__:
            raise TypeError(
                "Keyword arguments passed to component `__init__` must correspond to "
                f"component fields. Received non-matching argument '{name}'."
            )
        if utils.is_component_instance(value):
            if value.__component_configured__:
                raise ValueError(
                    "Sub-component instances passed to the `__init__` method of a "
                    "component must not already be configured. Received configured "
                    f"component argument '{name}={repr(value)}'."
                )
            if value.__component_parent__ is None:
                value.__component_parent__ = instance

    instance.__component_default_field_values__ = {}
    instance.__component_instantiated_field_values__ = {**kwargs}
    instance.__component_configured_field_values__ = {}
    instance.__component_fields_with_values_in_scope__ = {
        field.name
        for field in instance.__component_fields__.values()
        if field.has_default
    } | set(kwargs)


def _match_component_class(field: ComponentField, value: Any) -> Any:
    """Turn a class name such as `DiscountW` or `discount_w` into an instance."""
    if not isinstance(value, str):
        return value
    for subclass in utils.generate_component_subclasses(field.type):
        if value in (
            subclass.__name__,
            subclass.__qualname__,
        ) or utils.convert_to_snake_case(value) == utils.convert_to_snake_case(
            subclass.__name__
        ):
            return subclass()
    return value


def _unused_key_error(instance, key: str) -> ValueError:
    return ValueError(
        f"Key '{key}' does not correspond to any field of component "
        f"'{instance.__component_name__}'. Fields of nested components must be "
        "fully qualified, e.g. `model.phi=0.9` rather than `phi=0.9`."
    )


def configure_component_instance(
    instance,
    conf: Dict[str, Any],
    name: Optional[str],
    fields_in_scope: AbstractSet[str],
) -> Dict[str, Any]:
    """Apply the keys of `conf` that address `instance` itself.

    Called by `configure` once per component in the tree.
    """
    if name is not None:
        instance.__component_name__ = name

    instance.__component_fields_with_values_in_scope__ |= fields_in_scope

    for field in instance.__component_fields__.values():
        full_name = f"{instance.__component_name__}.{field.name}"

        if field.name in conf:
            value = conf[field.name]
            if isinstance(field, ComponentField):
                value = _match_component_class(field, value)
            if utils.is_component_instance(value):
                value.__component_parent__ = instance
            # Type mismatches surface on first access, with the field name.
            instance.__component_configured_field_values__[field.name] = value
        elif field.name in instance.__component_fields_with_values_in_scope__:
            pass
        elif field.allow_missing:
            continue
        elif isinstance(field, ComponentField):
            candidates = list(utils.generate_component_subclasses(field.type))
            if len(candidates) == 1:
                utils.warn(
                    f"'{utils.type_name_str(candidates[0])}' is the only component "
                    f"class satisfying the type of field '{full_name}'; using it by "
                    "default."
                )
                value = candidates[0]()
                value.__component_parent__ = instance
                instance.__component_configured_field_values__[field.name] = value
            else:
                names = "\n    ".join(
                    [""] + [utils.type_name_str(c) for c in candidates]
                )
                raise ValueError(
                    f"Component field '{full_name}' of type "
                    f"'{utils.type_name_str(field.type)}' has no default or configured "
                    f"class. Configure it with one of:{names}"
                )
        else:
            raise ValueError(
                "No configuration value found for annotated field "
                f"'{full_name}' of type '{utils.type_name_str(field.type)}'."
            )

        instance.__component_fields_with_values_in_scope__.add(field.name)

    for key in conf:
        head = key.split(".")[0]
        if "." in key:
            if not isinstance(instance.__component_fields__.get(head), ComponentField):
                raise _unused_key_error(instance, key)
        elif key not in instance.__component_fields__:
            raise _unused_key_error(instance, key)

    instance.__component_configured__ = True

    if hasattr(instance.__class__, "__post_configure__"):
        instance.__post_configure__()

    return conf


def component(cls: Type):
    """Turn a class into a gilevel component."""

    if not inspect.isclass(cls):
        raise TypeError("Only classes can be decorated with @component.")
    if inspect.isabstract(cls):
        raise TypeError("Abstract classes cannot be decorated with @component.")
    if utils.is_component_class(cls):
        raise TypeError(
            f"The class {cls.__name__} is already a component; the @component decorator "
            "cannot be applied again."
        )
    if cls.__init__ not in (object.__init__, __component_init__):
        raise TypeError("Component classes must not define a custom `__init__` method.")
    cls.__init__ = __component_init__

    if hasattr(cls, "__post_configure__"):
        if not callable(cls.__post_configure__):
            raise TypeError(
                "The `__post_configure__` attribute of a @component class must be a "
                "method."
            )
        call_args = inspect.signature(cls.__post_configure__).parameters
        if len(call_args) > 1:
            raise TypeError(
                "The `__post_configure__` method of a @component class must take no "
                "arguments except `self`."
            )

    # Walk the MRO from the root so that subclasses override inherited fields.
    fields = {}
    for base_class in reversed(inspect.getmro(cls)):
        for name, value in base_class.__dict__.items():
            if isinstance(value, Field):
                fields[name] = value

    for name in dir(cls):
        if name in fields and not isinstance(getattr(cls, name), Field):
            super_class = fields[name].host_component_class
            raise ValueError(
                f"Field '{name}' is defined on super-class {super_class.__name__}. "
                f"In subclass {cls.__name__}, '{name}' has been overriden with value: "
                f"{getattr(cls, name)}. Wrap a new default in a new `Field` instead."
            )

    cls.__component_fields__ = fields

    _wrap_getattribute(cls)
    _wrap_setattr(cls)
    _wrap_delattr(cls)
    _wrap_dir(cls)

    for attr, impl in (
        ("__len__", __component_len__),
        ("__contains__", __component_contains__),
        ("__iter__", __component_iter__),
    ):
        if hasattr(cls, attr) and getattr(cls, attr) != impl:
            raise TypeError(f"Component classes must not define a custom `{attr}`.")
        setattr(cls, attr, impl)

    cls.__str__ = __component_str__
    cls.__repr__ = __component_repr__

    # Overridden per instance during configuration.
    cls.__component_name__ = cls.__name__
    cls.__component_parent__ = None
    cls.__component_configured__ = False

    return cls


def configure(instance, conf: Dict[str, Any], name: Optional[str] = None):
    """Configure `instance` and its sub-components from the dotted keys in
    `conf`.

    Configured values take precedence over keyword arguments and defaults.
    Components are configured top-down, breadth first.
    """
    if not utils.is_component_instance(instance):
        raise TypeError(
            f"Only @component and @task instances can be configured. Received: "
            f"{instance}."
        )
    if instance.__component_configured__:
        raise ValueError(
            f"Component '{instance.__component_name__}' has already been configured."
        )

    queue = [(instance, conf, name, frozenset(conf.keys()))]
    while queue:
        current, current_conf, current_name, in_scope = queue.pop(0)
        if current.__component_configured__:
            continue

        current_conf = configure_component_instance(
            current, conf=current_conf, name=current_name, fields_in_scope=in_scope
        )

        for field in current.__component_fields__.values():
            if not isinstance(field, ComponentField):
                continue
            try:
                child = base_getattr(current, field.name)
            except (AttributeError, ConfigurationError) as e:
                if field.allow_missing:
                    continue
                raise e from None
            if not utils.is_component_instance(child) or child.__component_configured__:
                continue

            prefix = f"{field.name}."
            child_conf = {
                k[len(prefix) :]: v for k, v in current_conf.items() if k.startswith(prefix)
            }
            queue.append(
                (
                    child,
                    child_conf,
                    f"{current.__component_name__}.{field.name}",
                    in_scope | frozenset(current.__component_fields__.keys()),
                )
            )
