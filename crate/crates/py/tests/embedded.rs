//! Loads the module into an embedded interpreter and runs the Python smoke
//! test against it.

use std::ffi::CString;
use std::sync::Once;

use pyo3::prelude::*;
use pyo3::types::PyDict;

static INIT: Once = Once::new();

fn with_python<R>(f: impl for<'py> FnOnce(Python<'py>) -> R) -> R {
    INIT.call_once(|| {
        use actionvec_py::actionvec_py;
        pyo3::append_to_inittab!(actionvec_py);
        Python::initialize();
    });
    Python::attach(f)
}

fn exec<'py>(py: Python<'py>, code: &str) -> PyResult<Bound<'py, PyDict>> {
    let globals = PyDict::new(py);
    py.run(&CString::new(code).unwrap(), Some(&globals), None)?;
    Ok(globals)
}

#[test]
fn smoke_script_passes() {
    let script = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../python/smoke_test.py")).unwrap();
    with_python(|py| {
        let globals = exec(py, &script.replace("if __name__ == \"__main__\":\n    main()", "")).unwrap();
        globals
            .get_item("main")
            .unwrap()
            .expect("main defined")
            .call0()
            .inspect_err(|e| e.display(py))
            .unwrap();
    });
}

#[test]
fn errors_map_to_python_exceptions() {
    with_python(|py| {
        let g = exec(
            py,
            r#"
import actionvec as av
kinds = []
for f in (
    lambda: av.DescriptorMatrix.read("/nonexistent/x.desc"),
    lambda: av.Encoding("bogus", [1.0]),
    lambda: av.Encoding("vlad", [2.0, 0.0]),
    lambda: av.fit_pca(av.DescriptorMatrix([[1.0, 2.0]]), 1),
    lambda: av.encode_lcd(av.DescriptorMatrix([[1.0]]), 1, None),
):
    try:
        f()
        kinds.append(None)
    except Exception as e:
        kinds.append(type(e).__name__)
"#,
        )
        .unwrap();
        let kinds: Vec<Option<String>> = g.get_item("kinds").unwrap().unwrap().extract().unwrap();
        let expected = ["OSError", "ValueError", "ValueError", "ValueError", "TypeError"];
        assert_eq!(kinds, expected.map(|s| Some(s.to_string())));
    });
}

#[test]
fn models_roundtrip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    with_python(|py| {
        let g = exec(
            py,
            &format!(
                r#"
import os, actionvec as av
d = {dir:?}
m = av.DescriptorMatrix([[float(i % 5), float(i % 3), float(i % 7)] for i in range(40)])
cb = av.fit_kmeans(m, 4, seed=9)
cb.save(os.path.join(d, "cb.pack"))
g = av.fit_gmm(m, 2, seed=9)
g.save(os.path.join(d, "g.pack"))
same_cb = av.Codebook.load(os.path.join(d, "cb.pack"))
same_g = av.GmmModel.load(os.path.join(d, "g.pack"))
ok = (
    [same_cb.assign(r) for r in m.to_list()] == [cb.assign(r) for r in m.to_list()]
    and av.encode_fisher(same_g, m).dim == av.encode_fisher(g, m).dim
    and repr(same_cb) == "Codebook(k=4, dim=3)"
)
"#,
                dir = dir.path().to_str().unwrap()
            ),
        )
        .unwrap();
        assert!(g.get_item("ok").unwrap().unwrap().extract::<bool>().unwrap());
    });
}
