//! Brute-force evaluator of the per-step completion-time recurrences.
//!
//! Shares nothing with the engine except the scenario type, the noise table
//! (an input) and the Hockney cost. Every quantity is recomputed from the
//! previous iterate until nothing changes.

use idlewave::comm::{Boundary, Direction, Protocol, ProtocolOverride};
use idlewave::perturbation::noise_table;
use idlewave::Scenario;

fn partners(s: &Scenario, p: usize) -> Vec<usize> {
    let n = s.n_ranks as i64;
    let mut out = Vec::new();
    for o in 1..=s.topology.distance as i64 {
        let mut offs = vec![o];
        if s.topology.direction == Direction::Bidirectional {
            offs.push(-o);
        }
        for off in offs {
            let q = p as i64 + off;
            match s.topology.boundary {
                Boundary::Periodic => out.push(q.rem_euclid(n) as usize),
                Boundary::Open => {
                    if q >= 0 && q < n {
                        out.push(q as usize)
                    }
                }
            }
        }
    }
    out
}

fn base_protocol(s: &Scenario) -> Protocol {
    match s.protocol.override_mode {
        Some(ProtocolOverride::ForceEager) => Protocol::Eager,
        Some(ProtocolOverride::ForceRendezvous) => Protocol::Rendezvous,
        None => {
            if s.protocol.message_size_bytes <= s.protocol.eager_limit_bytes {
                Protocol::Eager
            } else {
                Protocol::Rendezvous
            }
        }
    }
}

/// Waitall completion `[rank][step-1]` by Jacobi fixed-point iteration.
pub fn waitall_fixed_point(s: &Scenario) -> Vec<Vec<f64>> {
    let n = s.n_ranks;
    let k_max = s.n_steps;
    let cost = s.cost.latency_us + s.protocol.message_size_bytes as f64 / s.cost.bandwidth_bytes_per_us;
    let noise = noise_table(&s.noise, s.t_exec_us, s.seed, n, k_max);
    let delay = |p: usize, k: usize| -> f64 {
        s.delays
            .iter()
            .filter(|d| d.rank == p && d.step == k)
            .map(|d| d.duration_us)
            .sum()
    };
    // (src, dst) in sender posting order
    let msgs: Vec<(usize, usize)> = (0..n)
        .flat_map(|p| partners(s, p).into_iter().map(move |q| (p, q)))
        .collect();
    let base = base_protocol(s);

    let mut w = vec![vec![0.0f64; k_max]; n];
    let mut recv = vec![vec![f64::INFINITY; msgs.len()]; k_max];
    for _iter in 0..(k_max + 3) * 2 {
        let post: Vec<Vec<f64>> = (0..n)
            .map(|p| {
                (0..k_max)
                    .map(|k| {
                        let ready = if k == 0 { 0.0 } else { w[p][k - 1] };
                        ready + s.t_exec_us + noise[p][k] + delay(p, k + 1)
                    })
                    .collect()
            })
            .collect();

        // Protocol of every message; the eager cap looks at deliveries of
        // earlier steps from the previous iterate.
        let mut proto = vec![vec![base; msgs.len()]; k_max];
        if let (Protocol::Eager, Some(cap)) = (base, s.protocol.eager_buffer_cap) {
            for src in 0..n {
                let mine: Vec<usize> = (0..msgs.len()).filter(|&m| msgs[m].0 == src).collect();
                let mut eager_sent: Vec<(usize, usize)> = Vec::new();
                for k in 0..k_max {
                    let t = post[src][k];
                    let mut count = eager_sent
                        .iter()
                        .filter(|&&(kk, m)| recv[kk][m] >= t)
                        .count();
                    for &m in &mine {
                        if count >= cap {
                            proto[k][m] = Protocol::Rendezvous;
                        } else {
                            count += 1;
                            eager_sent.push((k, m));
                        }
                    }
                }
            }
        }

        let mut new_w = vec![vec![0.0f64; k_max]; n];
        let mut new_recv = vec![vec![0.0f64; msgs.len()]; k_max];
        for k in 0..k_max {
            let handshake: Vec<f64> = (0..n)
                .map(|src| {
                    msgs.iter()
                        .enumerate()
                        .filter(|(m, &(a, _))| a == src && proto[k][*m] == Protocol::Rendezvous)
                        .map(|(_, &(_, b))| post[b][k])
                        .fold(post[src][k], f64::max)
                })
                .collect();
            for p in 0..n {
                new_w[p][k] = post[p][k];
            }
            for (m, &(a, b)) in msgs.iter().enumerate() {
                let (send_done, recv_done) = match proto[k][m] {
                    Protocol::Eager => (post[a][k], post[b][k].max(post[a][k] + cost)),
                    Protocol::Rendezvous => {
                        let done = handshake[a].max(post[b][k]) + cost;
                        (done, done)
                    }
                };
                new_recv[k][m] = recv_done;
                new_w[a][k] = new_w[a][k].max(send_done);
                new_w[b][k] = new_w[b][k].max(recv_done);
            }
        }
        if new_w == w && new_recv == recv {
            return w;
        }
        w = new_w;
        recv = new_recv;
    }
    panic!("fixed-point iteration did not converge");
}
