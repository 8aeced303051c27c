//! Adaptive mesh movement and adaptive moving-mesh P1 finite element
//! solution of second-order PDE systems on simplicial meshes in 1, 2 and 3
//! spatial dimensions.
//!
//! The mesh equation is the gradient flow of an equidistribution/alignment
//! meshing functional driven by a per-vertex metric tensor field. Physical
//! PDEs are discretized with P1 conforming elements on the moving mesh and
//! integrated in time with a fifth-order Radau IIA method.

pub mod fem;
pub mod mesh;
pub mod metric;
pub mod movmesh;
pub mod odeint;
pub mod problems;
pub mod quadrature;
pub mod smallmat;
pub mod sparse;
