//! Temporary diagnostic: print gradient-error slopes per family and degree.

use dsgd::mesh::MeshFamily;
use dsgd::scheme::TestCase;
use dsgd::stabilization::StabKind;
use dsgd::study::{gradient_error_slope, run_family_study, RunSettings};

#[test]
#[ignore]
fn print_slopes() {
    for family in MeshFamily::ALL {
        for k in 0..=2 {
            let settings = RunSettings::new(k, k, 2.0, StabKind::Rtn);
            let ns: Vec<usize> = (1..5).collect();
            let records =
                run_family_study(family, &ns, TestCase::Trigonometric, &settings).unwrap();
            let slope = gradient_error_slope(&records);
            let errs: Vec<String> = records.iter().map(|r| format!("{:.3e}", r.err_grad)).collect();
            println!("{family:>16} k={k}: slope {slope:.3} errs {errs:?}");
        }
    }
}

#[test]
#[ignore]
fn print_h_ratios() {
    use dsgd::mesh::MeshFamilySpec;
    for family in MeshFamily::ALL {
        let hs: Vec<f64> = (0..6)
            .map(|n| MeshFamilySpec::new(family, n).generate().unwrap().h)
            .collect();
        let ratios: Vec<String> = hs.windows(2).map(|w| format!("{:.4}", w[1] / w[0])).collect();
        println!("{family:>16}: h {:?} ratios {ratios:?}", hs.iter().map(|h| format!("{h:.4}")).collect::<Vec<_>>());
    }
}

#[test]
#[ignore]
fn hexagonal_k0_deep() {
    let settings = RunSettings::new(0, 0, 2.0, StabKind::Rtn);
    let ns: Vec<usize> = (1..7).collect();
    let records =
        run_family_study(MeshFamily::Hexagonal, &ns, TestCase::Trigonometric, &settings).unwrap();
    for w in records.windows(2) {
        let s = (w[0].err_grad / w[1].err_grad).ln() / (w[0].h / w[1].h).ln();
        println!("n {} -> {}: step slope {s:.3}", w[0].h, w[1].h);
    }
    println!("tail slope {:.3}", gradient_error_slope(&records));
}

#[test]
#[ignore]
fn print_k3_slopes() {
    for family in MeshFamily::ALL {
        let settings = RunSettings::new(3, 3, 2.0, StabKind::Rtn);
        let ns: Vec<usize> = (1..5).collect();
        let t0 = std::time::Instant::now();
        let records = run_family_study(family, &ns, TestCase::Trigonometric, &settings).unwrap();
        let slope = gradient_error_slope(&records);
        println!(
            "{family:>16} k=3: slope {slope:.3} ({:.1}s) errs {:?}",
            t0.elapsed().as_secs_f64(),
            records.iter().map(|r| format!("{:.3e}", r.err_grad)).collect::<Vec<_>>()
        );
    }
}
