#![allow(dead_code)]

use std::sync::Arc;

use smio_core::config::ExperimentConfig;
use smio_core::system::SystemSpec;

/// Scalar plant observed only through the sum of state and unknown input.
pub const CONTRACTIVE_TOY: &str = r#"
[system]
name = "contractive_toy"
n = 1
p = 1
m = 1
l = 1
f = ["0.5*x1 + 0.2*sin(x1) + 0.2*d1 + w1"]
g = ["x1 + d1 + v1"]
h = ["0.4*sin(d1) + 0.1*x1"]
f_jacobian_lo = [[0.3, 0.2, 0, 1]]
f_jacobian_hi = [[0.7, 0.2, 0, 1]]
lipschitz_f = [[0.2, 0, 0, 0]]
lipschitz_g = [[0, 0, 0, 0]]
lipschitz_h = [0.4124]
w = { lo = [-0.1], hi = [0.1] }
v = { lo = [-0.1], hi = [0.1] }
x_space = { lo = [-5], hi = [5] }
d_space = { lo = [-1], hi = [1] }
x0 = { lo = [-4], hi = [4] }

[run]
horizon = 100
seed_count = 20

[observer]
force_global = true
"#;

/// Scalar plant where both the state and the unknown input are measured.
pub const FULLY_MEASURED_TOY: &str = r#"
[system]
name = "fully_measured_toy"
n = 1
p = 1
m = 1
l = 2
f = ["0.5*x1 + 0.3*sin(x1) + 0.2*d1 + w1"]
g = ["x1 + v1", "d1 + v2"]
h = ["0.5*sin(d1) + 0.2*x1"]
f_jacobian_lo = [[0.2, 0.2, 0, 1]]
f_jacobian_hi = [[0.8, 0.2, 0, 1]]
lipschitz_f = [[0.3, 0, 0, 0]]
lipschitz_g = [[0, 0, 0, 0, 0], [0, 0, 0, 0, 0]]
lipschitz_h = [0.5386]
w = { lo = [-0.05], hi = [0.05] }
v = { lo = [-0.1, -0.1], hi = [0.1, 0.1] }
x_space = { lo = [-4], hi = [4] }
d_space = { lo = [-1.5], hi = [1.5] }
x0 = { lo = [-1], hi = [1] }
d0 = { lo = [-1], hi = [1] }

[run]
horizon = 30
seeds = [11]
"#;

/// Linear plant, exact identity measurement, no noise.
pub const NOISELESS_IDENTITY: &str = r#"
[system]
name = "noiseless_identity"
n = 1
p = 1
m = 1
l = 2
f = ["0.5*x1 + 0.1*d1"]
g = ["x1", "d1"]
h = ["0.5*d1"]
f_jacobian_lo = [[0.5, 0.1, 0, 0]]
f_jacobian_hi = [[0.5, 0.1, 0, 0]]
lipschitz_f = [0.0]
lipschitz_g = [0.0, 0.0]
lipschitz_h = [0.5]
w = { lo = [0], hi = [0] }
v = { lo = [0, 0], hi = [0, 0] }
x_space = { lo = [-4], hi = [4] }
d_space = { lo = [-1], hi = [1] }
x0 = { lo = [-1], hi = [1] }

[run]
horizon = 20
seeds = [1, 2]
"#;

/// Everything constant: no state or input dependence anywhere.
pub const CONSTANT_TOY: &str = r#"
[system]
name = "constant_toy"
n = 1
p = 1
m = 1
l = 1
f = ["w1"]
g = ["x1 + v1"]
h = ["0"]
f_jacobian_lo = [[0, 0, 0, 1]]
f_jacobian_hi = [[0, 0, 0, 1]]
lipschitz_f = [0.0]
lipschitz_g = [0.0]
lipschitz_h = [0.0]
w = { lo = [-0.1], hi = [0.1] }
v = { lo = [-0.1], hi = [0.1] }
x_space = { lo = [-1], hi = [1] }
d_space = { lo = [-1], hi = [1] }
x0 = { lo = [-0.5], hi = [0.5] }

[run]
horizon = 10

[stability]
columns = "state"
"#;

pub const DEANGELIS: &str = r#"
[system]
builtin = "deangelis_modified"

[run]
horizon = 500
seed_count = 100

[stability]
mode = "oracle"
columns = "state-noise"
"#;

pub fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).expect("test config parses")
}

pub fn config_with_output(text: &str, dir: &std::path::Path) -> ExperimentConfig {
    let mut c = config(text);
    c.output.dir = dir.to_string_lossy().into_owned();
    c
}

pub fn system(text: &str) -> Arc<SystemSpec> {
    Arc::new(config(text).build_system().expect("test system builds"))
}
