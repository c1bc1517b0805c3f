import type { Choice, NextResponse, Progress } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(path, init);
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body: keep statusText
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

function post<T>(path: string, body: unknown): Promise<T> {
  return request<T>(path, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
}

export class AnnotationApi {
  constructor(private base: string = "") {}

  register(annotator: string, role: string): Promise<{ ok: boolean }> {
    return post(`${this.base}/api/register`, { annotator, role });
  }

  next(annotator: string): Promise<NextResponse> {
    return request(`${this.base}/api/next?annotator=${encodeURIComponent(annotator)}`);
  }

  submit(annotator: string, key: string, choice: Choice): Promise<Progress> {
    return post(`${this.base}/api/submit`, { annotator, key, choice });
  }

  skip(annotator: string, key: string): Promise<Progress> {
    return post(`${this.base}/api/skip`, { annotator, key });
  }

  progress(annotator: string): Promise<Progress> {
    return request(`${this.base}/api/progress?annotator=${encodeURIComponent(annotator)}`);
  }
}
