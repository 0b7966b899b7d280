use holling3::control::{solve, verify_pmp, ControlMode, OCProblem};
use holling3::model::{ModelParams, State};
use std::time::Instant;

fn run(label: &str, oc: &OCProblem, n: usize) {
    let t0 = Instant::now();
    match solve(oc, n) {
        Ok(sol) => {
            let rep = verify_pmp(&sol, oc);
            println!("== {label} (n={n}) in {:?}", t0.elapsed());
            println!("   T = {:.6}  miss = {:.2e}  defect = {:.2e}  converged = {} restart = {}",
                sol.final_time, sol.endpoint_miss, sol.transcription_defect, sol.converged, sol.restart_index);
            println!("   end = ({:.4}, {:.4}) target = ({}, {})",
                sol.states.last().unwrap().x, sol.states.last().unwrap().y, oc.sf.x, oc.sf.y);
            println!("   bang = {:.3}  signcons = {:.3} ({} nodes) switches = {:?}",
                rep.bang_fraction, rep.sign_consistency, rep.consistency_nodes, rep.switch_times);
            println!("   multipliers = {:?}  iters = {}", sol.multipliers, sol.nlp_iterations);
            let us: Vec<String> = sol.controls.iter().map(|u| format!("{:.2}", u)).collect();
            println!("   u = [{}]", us.join(" "));
            let sg: Vec<String> = sol.switching.iter().step_by(4).map(|s| format!("{:+.3}", s)).collect();
            println!("   sigma/4 = [{}]", sg.join(" "));
        }
        Err(e) => println!("== {label} FAILED: {e}"),
    }
}

fn main() {
    let quality = OCProblem {
        mode: ControlMode::Quality,
        u_min: 0.0,
        u_max: 2.0,
        params: ModelParams::new(1.2, 0.8, 0.0, 0.05, 1.5, 0.5).unwrap(),
        s0: State { x: 4.0, y: 0.5 },
        sf: State { x: 0.1, y: 19.7 },
        endpoint_tol: 1e-2,
    };
    run("quality", &quality, 60);

    let quantity = OCProblem {
        mode: ControlMode::Quantity,
        u_min: 0.0,
        u_max: 2.0,
        params: ModelParams::new(1.2, 0.0, 1.0, 0.05, 1.5, 0.5).unwrap(),
        s0: State { x: 2.0, y: 1.0 },
        sf: State { x: 0.1, y: 24.5 },
        endpoint_tol: 1e-2,
    };
    run("quantity", &quantity, 60);
}
