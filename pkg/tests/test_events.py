from blocs import (BlocsException, CoverageError, DivergenceError, Events,
                   GeometryError, ImageFormatError)

def test_callbacks_run_in_order() -> None:
    events = Events()
    seen = []
    events.register("iteration", lambda record: seen.append(("a", record)))
    events.register("iteration", lambda record: seen.append(("b", record)))
    events.register("finished", lambda trace: seen.append(("done", trace)))

    events.fire("iteration", 1)
    events.fire("unknown", 2)

    assert seen == [("a", 1), ("b", 1)]

def test_exception_hierarchy() -> None:
    assert issubclass(CoverageError, GeometryError)
    assert issubclass(GeometryError, BlocsException)

    error = DivergenceError(7)
    assert error.iteration == 7
    assert "7" in str(error)

    error = ImageFormatError("a.pgm", "truncated header")
    assert str(error) == "a.pgm: truncated header"
    assert error.path == "a.pgm"
