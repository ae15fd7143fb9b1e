use qasa_ffi::*;
use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

fn last_error() -> String {
    let p = qasa_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn circuit_round_trip() {
    unsafe {
        let mut c = ptr::null_mut();
        assert_eq!(qasa_circuit_new(2, 1, QasaGradientEngine::Adjoint, &mut c), QasaStatus::Ok);
        let mut p = 0usize;
        assert_eq!(qasa_circuit_num_params(c, &mut p), QasaStatus::Ok);
        assert_eq!(p, 5);

        // All-zero angles leave every data wire in |0>.
        let theta = vec![0.0; p];
        let inputs = [0.0, 0.0];
        let mut out = [9.0; 2];
        assert_eq!(
            qasa_circuit_forward(c, theta.as_ptr(), p, inputs.as_ptr(), 2, out.as_mut_ptr(), 2),
            QasaStatus::Ok
        );
        assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-12));

        let inputs = [0.3, -0.7];
        let (mut y, mut dx, mut dt) = ([0.0; 2], [0.0; 4], vec![0.0; 2 * p]);
        assert_eq!(
            qasa_circuit_jacobians(
                c,
                theta.as_ptr(),
                p,
                inputs.as_ptr(),
                2,
                y.as_mut_ptr(),
                dx.as_mut_ptr(),
                dt.as_mut_ptr()
            ),
            QasaStatus::Ok
        );
        let mut f = [0.0; 2];
        qasa_circuit_forward(c, theta.as_ptr(), p, inputs.as_ptr(), 2, f.as_mut_ptr(), 2);
        assert_eq!(y, f);

        assert_eq!(
            qasa_circuit_forward(c, theta.as_ptr(), p, inputs.as_ptr(), 1, out.as_mut_ptr(), 2),
            QasaStatus::Dimension
        );
        assert!(last_error().contains("dimension"));
        qasa_circuit_free(c);
    }
}

#[test]
fn model_predict_save_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.qasa").to_str().unwrap()).unwrap();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(qasa_model_new_desk(QasaVariant::Qasa, 7, &mut m), QasaStatus::Ok);
        let mut l = 0usize;
        qasa_model_seq_len(m, &mut l);
        assert_eq!(l, 32);
        let w: Vec<f64> = (0..2 * l).map(|k| (k as f64 * 0.1).sin()).collect();
        let mut y = [0.0; 2];
        assert_eq!(qasa_model_predict(m, w.as_ptr(), 2, l, y.as_mut_ptr()), QasaStatus::Ok);
        assert!(y.iter().all(|v| v.is_finite()));

        assert_eq!(qasa_model_save(m, path.as_ptr()), QasaStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(qasa_model_load(path.as_ptr(), &mut back), QasaStatus::Ok);
        let mut y2 = [0.0; 2];
        qasa_model_predict(back, w.as_ptr(), 2, l, y2.as_mut_ptr());
        assert_eq!(y, y2);

        assert_eq!(qasa_model_predict(m, w.as_ptr(), 2, l - 1, y.as_mut_ptr()), QasaStatus::Dimension);
        qasa_model_free(m);
        qasa_model_free(back);
    }
}

#[test]
fn null_and_bad_input_are_reported() {
    unsafe {
        assert_eq!(qasa_model_seq_len(ptr::null(), ptr::null_mut()), QasaStatus::NullPointer);
        assert!(last_error().contains("model"));
        let mut m = ptr::null_mut();
        let json = CString::new(r#"{"d_model": 65}"#).unwrap();
        assert_eq!(qasa_model_from_json(json.as_ptr(), &mut m), QasaStatus::Config);
        let json = CString::new(r#"{"nope": 1}"#).unwrap();
        assert_eq!(qasa_model_from_json(json.as_ptr(), &mut m), QasaStatus::Config);
        assert!(m.is_null());
        let missing = CString::new("/nonexistent/ckpt").unwrap();
        assert_eq!(qasa_model_load(missing.as_ptr(), &mut m), QasaStatus::Io);
        let mut c = ptr::null_mut();
        assert_eq!(
            qasa_circuit_new(0, 1, QasaGradientEngine::Adjoint, &mut c),
            QasaStatus::InvalidArgument
        );
        qasa_model_free(ptr::null_mut());
        qasa_circuit_free(ptr::null_mut());
    }
    let mut c = ptr::null_mut();
    assert_eq!(
        unsafe { qasa_circuit_new(1, 1, QasaGradientEngine::ParameterShift, &mut c) },
        QasaStatus::Ok
    );
    assert!(qasa_last_error_message().is_null());
    unsafe { qasa_circuit_free(c) };
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(qasa_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/qasa.h")).unwrap();
    for sym in [
        "qasa_last_error_message",
        "qasa_version",
        "qasa_model_new_desk",
        "qasa_model_from_json",
        "qasa_model_load",
        "qasa_model_save",
        "qasa_model_seq_len",
        "qasa_model_num_params",
        "qasa_model_predict",
        "qasa_model_free",
        "qasa_circuit_new",
        "qasa_circuit_num_params",
        "qasa_circuit_forward",
        "qasa_circuit_jacobians",
        "qasa_circuit_free",
        "typedef struct QasaModel QasaModel",
        "typedef struct QasaCircuit QasaCircuit",
        "QASA_STATUS_OK = 0",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/qasa.h");
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    assert!(status.success());
}
