#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;
use distrobust_core::nn::Tensor;
use distrobust_core::Scalar;
use distrobust_core::zoo::{build, Arch, ArchitectureId};
use std::time::Instant;

fn main() {
    for (m, k, n) in [(12usize, 150usize, 196usize), (12, 150, 12544), (16, 72, 12544), (16, 72, 196)] {
        let a = vec![0.5f32; m * k];
        let b = vec![0.25f32; k * n];
        let mut c = vec![0f32; m * n];
        let t = Instant::now();
        let reps = 2_000_000_00 / (m * k * n);
        for _ in 0..reps {
            f32::gemm(m, k, n, &a, (k as isize, 1), &b, (n as isize, 1), 0.0, &mut c, (n as isize, 1));
        }
        println!("gemm {}x{}x{}: {:.2} GFLOP/s", m, k, n, 2.0 * (m * k * n * reps) as f64 / t.elapsed().as_secs_f64() / 1e9);
    }
    for arch in Arch::ALL {
        let net = build::<f32>(ArchitectureId::mnist(arch), 0).unwrap();
        let x = Tensor::new(vec![64, 1, 28, 28], (0..64 * 784).map(|i| ((i * 7919) % 255) as f32 / 255.0).collect()).unwrap();
        let labels: Vec<usize> = (0..64).map(|i| i % 10).collect();
        let t = Instant::now();
        let iters = 20;
        for _ in 0..iters {
            let _ = net.loss_and_param_grads(&x, &labels).unwrap();
        }
        let train = (iters * 64) as f64 / t.elapsed().as_secs_f64();
        let t = Instant::now();
        for _ in 0..iters {
            let _ = net.sample_gradients(&x, &labels).unwrap();
        }
        let ig = (iters * 64) as f64 / t.elapsed().as_secs_f64();
        let t = Instant::now();
        for _ in 0..iters {
            let _ = net.logits(&x).unwrap();
        }
        let fw = (iters * 64) as f64 / t.elapsed().as_secs_f64();
        println!("{:10} train {:8.0}   input-grad {:8.0}   forward {:8.0} samples/s", arch.name(), train, ig, fw);
    }
}
