// Three.js ghost view: translucent capsules spanning consecutive link
// frames, tinted by the feasibility state, over a floor grid with a base
// anchor marker. Without link poses (compact feed) only an EE triad shows.

import * as THREE from "three";
import { Snapshot } from "./state";

const STATE_COLORS: Record<string, number> = {
  feasible: 0x2e8b57,
  warning: 0xe6b800,
  infeasible: 0xcc2222,
};

export class GhostView {
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  private renderer: THREE.WebGLRenderer;
  private arm = new THREE.Group();
  private triad = new THREE.AxesHelper(0.12);
  private targetMarker: THREE.Mesh;
  private anchorMarker = new THREE.AxesHelper(0.15);
  private capsuleRadius = 0.035;

  constructor(canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true, alpha: true });
    this.camera = new THREE.PerspectiveCamera(50, 1, 0.01, 20);
    this.camera.position.set(1.1, -0.9, 0.7);
    this.camera.up.set(0, 0, 1);
    this.camera.lookAt(0.4, 0, 0.3);

    this.scene.background = new THREE.Color(0x10141a);
    const grid = new THREE.GridHelper(2, 20, 0x335577, 0x223344);
    grid.rotation.x = Math.PI / 2; // z-up world
    this.scene.add(grid);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.7));
    const sun = new THREE.DirectionalLight(0xffffff, 1.2);
    sun.position.set(1, -1, 2);
    this.scene.add(sun);
    this.scene.add(this.anchorMarker);
    this.scene.add(this.arm);
    this.scene.add(this.triad);
    this.triad.visible = false;

    this.targetMarker = new THREE.Mesh(
      new THREE.SphereGeometry(0.012),
      new THREE.MeshBasicMaterial({ color: 0xffffff, wireframe: true }),
    );
    this.scene.add(this.targetMarker);
  }

  resize(width: number, height: number): void {
    this.renderer.setSize(width, height, false);
    this.camera.aspect = width / height;
    this.camera.updateProjectionMatrix();
  }

  setAnchor(position: THREE.Vector3): void {
    this.anchorMarker.position.copy(position);
  }

  update(snapshot: Snapshot | null, target: THREE.Vector3 | null): void {
    if (target) this.targetMarker.position.copy(target);
    if (!snapshot) return;
    const color = STATE_COLORS[snapshot.state] ?? 0x888888;
    if (snapshot.link_poses && snapshot.link_poses.length > 1) {
      this.triad.visible = false;
      this.rebuildArm(snapshot.link_poses, color);
    } else {
      // compact feed: wireframe triad at the commanded target only
      this.arm.visible = false;
      this.triad.visible = true;
      const p = snapshot.p;
      this.triad.position.set(p[0][3], p[1][3], p[2][3]);
    }
  }

  private rebuildArm(linkPoses: number[][][], color: number): void {
    this.arm.visible = true;
    this.arm.clear();
    const material = new THREE.MeshStandardMaterial({
      color,
      transparent: true,
      opacity: 0.55,
      roughness: 0.4,
    });
    const points = linkPoses.map(
      (m) => new THREE.Vector3(m[0][3], m[1][3], m[2][3]),
    );
    for (let i = 0; i + 1 < points.length; i++) {
      const a = points[i];
      const b = points[i + 1];
      const length = a.distanceTo(b);
      if (length < 1e-6) {
        const joint = new THREE.Mesh(new THREE.SphereGeometry(this.capsuleRadius), material);
        joint.position.copy(a);
        this.arm.add(joint);
        continue;
      }
      const geom = new THREE.CapsuleGeometry(this.capsuleRadius, length, 4, 10);
      const mesh = new THREE.Mesh(geom, material);
      mesh.position.copy(a).add(b).multiplyScalar(0.5);
      mesh.quaternion.setFromUnitVectors(
        new THREE.Vector3(0, 1, 0),
        b.clone().sub(a).normalize(),
      );
      this.arm.add(mesh);
    }
  }

  render(): void {
    this.renderer.render(this.scene, this.camera);
  }
}
