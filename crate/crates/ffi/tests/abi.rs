use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use flowinv_ffi::*;

fn last_error() -> String {
    let n = unsafe { fi_last_error_message(ptr::null_mut(), 0) };
    let mut buf = vec![0u8; n + 1];
    unsafe { fi_last_error_message(buf.as_mut_ptr().cast(), buf.len()) };
    CStr::from_bytes_until_nul(&buf)
        .unwrap()
        .to_str()
        .unwrap()
        .to_owned()
}

fn ok(status: FiStatus) {
    assert_eq!(status, FiStatus::Ok, "{}", last_error());
}

fn read_f64(get: impl Fn(*mut f64, *mut usize) -> FiStatus) -> Vec<f64> {
    let mut len = 0usize;
    ok(get(ptr::null_mut(), &mut len));
    let mut v = vec![0.0; len];
    ok(get(v.as_mut_ptr(), &mut len));
    assert_eq!(len, v.len());
    v
}

#[test]
fn forward_then_invert_round_trips() {
    unsafe {
        let weights = [0.5, 0.5];
        let mut dist = ptr::null_mut();
        ok(fi_distribution_from_weights(weights.as_ptr(), 2, &mut dist));

        let mut x = ptr::null_mut();
        ok(fi_forward_packet_sampling(dist, 0.5, &mut x));
        let probs = read_f64(|b, l| fi_observed_probs(x, b, l));
        assert!((probs[0] - 0.8).abs() < 1e-12 && (probs[1] - 0.2).abs() < 1e-12);
        fi_observed_free(x);

        let mut x = ptr::null_mut();
        ok(fi_forward_sh_packet(dist, 0.1, &mut x));
        let mut inv = ptr::null_mut();
        ok(fi_invert_sh_packet(x, 0.1, &mut inv));
        let raw = read_f64(|b, l| fi_inversion_raw(inv, b, l));
        assert!((raw[0] - 0.5).abs() < 1e-12 && (raw[1] - 0.5).abs() < 1e-12);
        let (mut c, mut pe) = (0.0, 0.0);
        ok(fi_inversion_summary(inv, &mut c, &mut pe));
        assert_eq!(pe, 0.1);
        assert!(c > 0.0);

        fi_inversion_free(inv);
        fi_observed_free(x);
        fi_distribution_free(dist);
    }
}

#[test]
fn negative_estimates_are_reported() {
    unsafe {
        let mut x = ptr::null_mut();
        ok(fi_observed_from_weights(
            [0.3, 0.7].as_ptr(),
            2,
            0.01,
            &mut x,
        ));
        let mut inv = ptr::null_mut();
        ok(fi_invert_sh_packet(x, 0.01, &mut inv));
        let mut idx = [0u64; 4];
        let mut len = idx.len();
        ok(fi_inversion_negative_indices(
            inv,
            idx.as_mut_ptr(),
            &mut len,
        ));
        assert_eq!(&idx[..len], &[1]);
        let clamped = read_f64(|b, l| fi_inversion_clamped(inv, b, l));
        assert!((clamped.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        fi_inversion_free(inv);
        fi_observed_free(x);
    }
}

#[test]
fn counts_bins_and_compare() {
    unsafe {
        let (lengths, counts) = ([1u64, 2, 3], [3u64, 1, 1]);
        let mut x = ptr::null_mut();
        ok(fi_observed_from_counts(
            lengths.as_ptr(),
            counts.as_ptr(),
            3,
            1.0,
            &mut x,
        ));
        let probs = read_f64(|b, l| fi_observed_probs(x, b, l));
        assert_eq!(probs, vec![0.6, 0.2, 0.2]);

        let mut inv = ptr::null_mut();
        ok(fi_invert_sh_byte(x, 1e-4, 500.0, &mut inv));
        let (mut c, mut pe) = (0.0, 0.0);
        ok(fi_inversion_summary(inv, &mut c, &mut pe));
        assert!((pe - (1.0 - 0.9999f64.powf(500.0))).abs() < 1e-12);
        fi_inversion_free(inv);
        fi_observed_free(x);

        let mut len = 0usize;
        ok(fi_make_bins(1000, 2.0, ptr::null_mut(), &mut len));
        let mut bins = vec![0u64; len];
        ok(fi_make_bins(1000, 2.0, bins.as_mut_ptr(), &mut len));
        assert_eq!(bins[0], 1);
        assert!(*bins.last().unwrap() > 1000);

        let truth = [0.5, 0.25, 0.25];
        let (mut tv, mut gap) = (-1.0, -1.0);
        ok(fi_compare(
            truth.as_ptr(),
            3,
            truth.as_ptr(),
            3,
            bins.as_ptr(),
            bins.len(),
            &mut tv,
            &mut gap,
        ));
        assert_eq!((tv, gap), (0.0, 0.0));
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut dist = ptr::null_mut();
        assert_eq!(
            fi_distribution_from_weights(ptr::null(), 3, &mut dist),
            FiStatus::NullPointer
        );
        assert!(last_error().contains("weights"));
        assert!(dist.is_null());

        assert_eq!(
            fi_distribution_from_weights([0.0, 0.0].as_ptr(), 2, &mut dist),
            FiStatus::InvalidDistribution
        );

        let mut x = ptr::null_mut();
        assert_eq!(
            fi_observed_from_weights([1.0].as_ptr(), 1, 1.5, &mut x),
            FiStatus::InvalidArgument
        );

        ok(fi_distribution_from_weights(
            [1.0, 1.0, 1.0].as_ptr(),
            3,
            &mut dist,
        ));
        let mut small = [0.0f64; 2];
        let mut len = small.len();
        assert_eq!(
            fi_distribution_probs(dist, small.as_mut_ptr(), &mut len),
            FiStatus::BufferTooSmall
        );
        assert_eq!(len, 3);
        fi_distribution_free(dist);

        let mut buf = [0u64; 4];
        let mut len = buf.len();
        assert_eq!(
            fi_make_bins(0, 2.0, buf.as_mut_ptr(), &mut len),
            FiStatus::InvalidArgument
        );

        let missing = CString::new("/nonexistent/trace.txt").unwrap();
        let mut flows = ptr::null_mut();
        let status = fi_flows_from_trace(
            missing.as_ptr(),
            f64::INFINITY,
            f64::INFINITY,
            usize::MAX,
            FiMethod::Always,
            1.0,
            0,
            &mut flows,
        );
        assert_eq!(status, FiStatus::Io);
        assert_eq!(
            CStr::from_ptr(fi_status_name(status)).to_str().unwrap(),
            "i/o error"
        );

        // freeing null is a no-op
        fi_distribution_free(ptr::null_mut());
        fi_observed_free(ptr::null_mut());
        fi_inversion_free(ptr::null_mut());
        fi_flowset_free(ptr::null_mut());
    }
}

#[test]
fn trace_to_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.txt");
    let mut text = String::new();
    // three UDP flows of lengths 1, 2 and 4, one TCP flow of length 3
    let mut t = 0.0;
    for (port, len, proto) in [(1u16, 1, 17), (2, 2, 17), (3, 4, 17), (4, 3, 6)] {
        for i in 0..len {
            let flags = if proto == 6 {
                if i == 0 {
                    "S"
                } else {
                    "-"
                }
            } else {
                "-"
            };
            text += &format!("{t:.6} {proto} 10.0.0.1 {port} 10.0.0.2 80 100 {flags}\n");
            t += 0.001;
        }
    }
    std::fs::write(&path, text).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut flows = ptr::null_mut();
        ok(fi_flows_from_trace(
            cpath.as_ptr(),
            2.0,
            f64::INFINITY,
            usize::MAX,
            FiMethod::Always,
            1.0,
            0,
            &mut flows,
        ));
        let (mut n, mut packets) = (0u64, 0u64);
        ok(fi_flowset_summary(flows, &mut n, &mut packets));
        assert_eq!((n, packets), (4, 10));

        let mut x = ptr::null_mut();
        ok(fi_flowset_observed(flows, 1.0, &mut x));
        assert_eq!(read_f64(|b, l| fi_observed_probs(x, b, l)), vec![0.25; 4]);
        fi_observed_free(x);
        fi_flowset_free(flows);

        let mut p = 0.0;
        let status = fi_calibrate_rate(
            cpath.as_ptr(),
            2.0,
            f64::INFINITY,
            usize::MAX,
            FiMethod::Always,
            0.5,
            0,
            &mut p,
        );
        assert_eq!(status, FiStatus::InvalidArgument);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(fi_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

const EXPORTED: &[&str] = &[
    "fi_version",
    "fi_status_name",
    "fi_last_error_message",
    "fi_distribution_from_weights",
    "fi_distribution_probs",
    "fi_distribution_free",
    "fi_observed_from_weights",
    "fi_observed_from_counts",
    "fi_observed_probs",
    "fi_observed_free",
    "fi_forward_packet_sampling",
    "fi_forward_sh_packet",
    "fi_invert_sh_packet",
    "fi_invert_sh_byte",
    "fi_inversion_summary",
    "fi_inversion_raw",
    "fi_inversion_clamped",
    "fi_inversion_negative_indices",
    "fi_inversion_free",
    "fi_make_bins",
    "fi_compare",
    "fi_flows_from_trace",
    "fi_flowset_summary",
    "fi_flowset_observed",
    "fi_flowset_free",
    "fi_calibrate_rate",
];

fn header() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/flowinv.h"))
        .unwrap()
}

#[test]
fn header_declares_every_entry_point() {
    let h = header();
    for name in EXPORTED {
        assert!(
            h.contains(&format!(" {name}(")) || h.contains(&format!("*{name}(")),
            "{name} missing from header"
        );
    }
    for ty in [
        "typedef struct FiDistribution",
        "typedef enum FiStatus",
        "FI_STATUS_BUFFER_TOO_SMALL = 8",
    ] {
        assert!(h.contains(ty), "{ty} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"flowinv.h\"\n\
         int main(void) {\n\
           FiDistribution *d = NULL;\n\
           double w[2] = {0.5, 0.5};\n\
           FiStatus s = fi_distribution_from_weights(w, 2, &d);\n\
           fi_distribution_free(d);\n\
           return s == FI_STATUS_OK ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .expect("a C compiler named cc");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
