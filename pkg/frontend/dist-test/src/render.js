// Canvas rendering of the scene block. The world-to-screen transform comes
// from the bounds the server sends at reset; the client adds no geometry of
// its own.
export class SceneRenderer {
    constructor(canvas) {
        this.canvas = canvas;
        this.bounds = [-1.5, -1.5, 1.5, 1.5];
    }
    toScreen(x, y) {
        const [x0, y0, x1, y1] = this.bounds;
        const sx = ((x - x0) / (x1 - x0)) * this.canvas.width;
        const sy = (1 - (y - y0) / (y1 - y0)) * this.canvas.height;
        return [sx, sy];
    }
    scale(r) {
        const [x0, , x1] = this.bounds;
        return (r / (x1 - x0)) * this.canvas.width;
    }
    draw(scene, recording) {
        if (scene.bounds)
            this.bounds = scene.bounds;
        const ctx = this.canvas.getContext('2d');
        if (!ctx)
            return;
        ctx.fillStyle = '#fafafa';
        ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
        if (scene.boundary !== null) {
            ctx.strokeStyle = '#d33';
            ctx.lineWidth = 2;
            for (const bx of [-scene.boundary, scene.boundary]) {
                const [sx0] = this.toScreen(bx, 0);
                ctx.beginPath();
                ctx.moveTo(sx0, 0);
                ctx.lineTo(sx0, this.canvas.height);
                ctx.stroke();
            }
        }
        for (const [hx, hy, hr] of scene.hazards) {
            const [sx, sy] = this.toScreen(hx, hy);
            ctx.fillStyle = 'rgba(210, 60, 60, 0.35)';
            ctx.beginPath();
            ctx.arc(sx, sy, this.scale(hr), 0, 2 * Math.PI);
            ctx.fill();
        }
        const [gx, gy] = this.toScreen(scene.goal[0], scene.goal[1]);
        ctx.fillStyle = '#2a2';
        ctx.beginPath();
        ctx.arc(gx, gy, 6, 0, 2 * Math.PI);
        ctx.fill();
        const [ax, ay] = this.toScreen(scene.agent[0], scene.agent[1]);
        ctx.fillStyle = '#2255cc';
        ctx.beginPath();
        ctx.arc(ax, ay, 5, 0, 2 * Math.PI);
        ctx.fill();
        if (recording) {
            ctx.fillStyle = '#c00';
            ctx.beginPath();
            ctx.arc(12, 12, 6, 0, 2 * Math.PI);
            ctx.fill();
        }
    }
}
